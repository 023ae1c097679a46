#pragma once

#include <speccorr/mesh.hpp>

#include <filesystem>
#include <optional>
#include <string_view>

namespace speccorr {

enum class MeshFormat { OFF, OBJ, PLY };

/// Guess the format from the extension, then from the first line of the file.
MeshFormat sniff_format(const std::filesystem::path& path);

std::optional<MeshFormat> parse_format_name(std::string_view name);

/// Throws ParseError on malformed input and MeshError when the result violates mesh invariants.
TriangleMesh load_mesh(const std::filesystem::path& path, std::optional<MeshFormat> format = std::nullopt);

/// Floats are written with 9 significant digits. Colors are emitted when present.
void save_mesh(const TriangleMesh& mesh, const std::filesystem::path& path, std::optional<MeshFormat> format = std::nullopt);

} // namespace speccorr
