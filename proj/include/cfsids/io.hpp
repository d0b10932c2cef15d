#pragma once

#include "cfsids/core.hpp"

#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace cfsids::io
{

/// Shortest decimal text that round-trips the double exactly.
inline std::string format_double(double v)
{
    std::array<char, 32> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return {buf.data(), res.ptr};
}

/// Fixed-point text for report tables.
inline std::string format_fixed(double v, int digits)
{
    std::array<char, 64> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed, digits);
    return {buf.data(), res.ptr};
}

inline bool parse_double(std::string_view s, double& out)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    if (s.empty())
        return false;
    if (s.front() == '+')
        s.remove_prefix(1);
    auto res = std::from_chars(s.data(), s.data() + s.size(), out);
    return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

/// Splits one CSV record (RFC 4180 quoting, no embedded newlines).
inline std::vector<std::string> split_csv_line(std::string_view line)
{
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            cells.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(std::move(cur));
    return cells;
}

inline std::string csv_escape(std::string_view s)
{
    if (s.find_first_of(",\"\n") == std::string_view::npos)
        return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += "\"\"";
        else
            out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline std::ofstream open_out(const std::filesystem::path& path, bool binary = false)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!out)
        throw DataError("cannot open '" + path.string() + "' for writing");
    return out;
}

inline std::ifstream open_in(const std::filesystem::path& path, bool binary = false)
{
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in)
        throw DataError("cannot open '" + path.string() + "' for reading");
    return in;
}

/// Little-endian-agnostic raw binary writer for the cache and model files.
/// Files are only meant to be read back on the machine that wrote them.
class BinaryWriter
{
public:
    explicit BinaryWriter(const std::filesystem::path& path) : out_(open_out(path, true)), path_(path) {}

    void magic(std::string_view tag, std::uint32_t version)
    {
        out_.write(tag.data(), static_cast<std::streamsize>(tag.size()));
        put(version);
    }

    template <typename T>
        requires std::is_trivially_copyable_v<T>
    void put(const T& v)
    {
        out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }

    void put_string(std::string_view s)
    {
        put<std::uint64_t>(s.size());
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

    template <typename T>
        requires std::is_trivially_copyable_v<T>
    void put_vector(std::span<const T> v)
    {
        put<std::uint64_t>(v.size());
        out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
    }

    void put_strings(std::span<const std::string> v)
    {
        put<std::uint64_t>(v.size());
        for (const auto& s : v)
            put_string(s);
    }

    void put_matrix(const Matrix& m)
    {
        put<std::uint64_t>(m.rows());
        put<std::uint64_t>(m.cols());
        put_vector<double>(m.data());
    }

    void finish()
    {
        out_.flush();
        if (!out_)
            throw DataError("write failed for '" + path_.string() + "'");
    }

private:
    std::ofstream out_;
    std::filesystem::path path_;
};

class BinaryReader
{
public:
    explicit BinaryReader(const std::filesystem::path& path) : in_(open_in(path, true)), path_(path) {}

    /// Checks the tag and returns the stored version.
    std::uint32_t magic(std::string_view tag)
    {
        std::string got(tag.size(), '\0');
        in_.read(got.data(), static_cast<std::streamsize>(got.size()));
        if (!in_ || got != tag)
            throw DataError("'" + path_.string() + "' is not a " + std::string(tag) + " file");
        return get<std::uint32_t>();
    }

    template <typename T>
        requires std::is_trivially_copyable_v<T>
    T get()
    {
        T v{};
        in_.read(reinterpret_cast<char*>(&v), sizeof(T));
        check();
        return v;
    }

    std::string get_string()
    {
        const auto n = checked_size(get<std::uint64_t>(), 1);
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        check();
        return s;
    }

    template <typename T>
        requires std::is_trivially_copyable_v<T>
    std::vector<T> get_vector()
    {
        const auto n = checked_size(get<std::uint64_t>(), sizeof(T));
        std::vector<T> v(n);
        in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
        check();
        return v;
    }

    std::vector<std::string> get_strings()
    {
        const auto n = checked_size(get<std::uint64_t>(), 8);
        std::vector<std::string> v;
        v.reserve(n);
        for (std::size_t i = 0; i < n; ++i)
            v.push_back(get_string());
        return v;
    }

    Matrix get_matrix()
    {
        const auto rows = get<std::uint64_t>();
        const auto cols = get<std::uint64_t>();
        Matrix m(0, 0);
        auto data = get_vector<double>();
        if (data.size() != rows * cols)
            throw DataError("corrupt matrix in '" + path_.string() + "'");
        m = Matrix(rows, cols);
        m.data() = std::move(data);
        return m;
    }

private:
    void check()
    {
        if (!in_)
            throw DataError("unexpected end of '" + path_.string() + "'");
    }

    std::size_t checked_size(std::uint64_t n, std::size_t elem)
    {
        // Guard against absurd lengths from corrupt files before allocating.
        if (n > (std::uint64_t{1} << 40) / elem)
            throw DataError("corrupt length field in '" + path_.string() + "'");
        return static_cast<std::size_t>(n);
    }

    std::ifstream in_;
    std::filesystem::path path_;
};

} // namespace cfsids::io
