#pragma once

#include <speccorr/mesh.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace speccorr::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
public:
    explicit TempDir(const std::string& tag)
    {
        std::random_device rd;
        m_path = std::filesystem::temp_directory_path() / ("speccorr-" + tag + "-" + std::to_string(rd()));
        std::filesystem::create_directories(m_path);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(m_path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return m_path; }
    std::filesystem::path operator/(const std::string& name) const { return m_path / name; }

private:
    std::filesystem::path m_path;
};

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// One unit right triangle in the z = 0 plane, counter-clockwise.
inline TriangleMesh right_triangle()
{
    VertexMatrix v(3, 3);
    v << 0, 0, 0, 1, 0, 0, 0, 1, 0;
    FaceMatrix f(1, 3);
    f << 0, 1, 2;
    return TriangleMesh(v, f);
}

} // namespace speccorr::testing
