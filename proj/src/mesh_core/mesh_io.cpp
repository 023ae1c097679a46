#include <speccorr/errors.hpp>
#include <speccorr/mesh_io.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace speccorr {

namespace fs = std::filesystem;

namespace {

struct Line
{
    std::size_t number;
    std::vector<std::string_view> tokens;
};

class TextFile
{
public:
    explicit TextFile(const fs::path& path)
        : m_path(path.string())
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ParseError(m_path, 0, "cannot open file");
        std::ostringstream ss;
        ss << in.rdbuf();
        m_text = ss.str();
        split();
    }

    const std::string& path() const { return m_path; }
    const std::vector<Line>& lines() const { return m_lines; }

    [[noreturn]] void fail(std::size_t line, const std::string& what) const
    {
        throw ParseError(m_path, line, what);
    }

    double to_double(const Line& line, std::size_t i) const
    {
        if (i >= line.tokens.size()) fail(line.number, "missing numeric field");
        const auto tok = line.tokens[i];
        double value = 0.0;
        const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
        if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
            fail(line.number, "not a number: '" + std::string(tok) + "'");
        }
        return value;
    }

    long long to_int(const Line& line, std::size_t i) const
    {
        if (i >= line.tokens.size()) fail(line.number, "missing integer field");
        const auto tok = line.tokens[i];
        long long value = 0;
        const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
        if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
            fail(line.number, "not an integer: '" + std::string(tok) + "'");
        }
        return value;
    }

private:
    void split()
    {
        std::size_t number = 0;
        std::size_t pos = 0;
        while (pos <= m_text.size()) {
            std::size_t end = m_text.find('\n', pos);
            if (end == std::string::npos) end = m_text.size();
            ++number;
            std::string_view sv(m_text.data() + pos, end - pos);
            Line line{number, {}};
            std::size_t i = 0;
            while (i < sv.size()) {
                while (i < sv.size() && (sv[i] == ' ' || sv[i] == '\t' || sv[i] == '\r')) ++i;
                if (i >= sv.size() || sv[i] == '#') break;
                std::size_t j = i;
                while (j < sv.size() && sv[j] != ' ' && sv[j] != '\t' && sv[j] != '\r') ++j;
                line.tokens.push_back(sv.substr(i, j - i));
                i = j;
            }
            if (!line.tokens.empty()) m_lines.push_back(std::move(line));
            pos = end + 1;
        }
    }

    std::string m_path;
    std::string m_text;
    std::vector<Line> m_lines;
};

TriangleMesh build(const TextFile& file, VertexMatrix v, std::vector<std::array<int, 3>> faces, VertexAttributes attr)
{
    FaceMatrix f(static_cast<Eigen::Index>(faces.size()), 3);
    for (std::size_t i = 0; i < faces.size(); ++i) {
        for (int c = 0; c < 3; ++c) f(static_cast<Eigen::Index>(i), c) = faces[i][c];
    }
    (void)file;
    return TriangleMesh(std::move(v), std::move(f), std::move(attr));
}

int checked_index(const TextFile& file, const Line& line, long long raw, long long count)
{
    if (raw < 0 || raw >= count) {
        // keep the raw value so the mesh validator can name the offending face
        if (raw < std::numeric_limits<int>::min() || raw > std::numeric_limits<int>::max()) {
            file.fail(line.number, "face index overflows");
        }
    }
    return static_cast<int>(raw);
}

TriangleMesh read_off(const TextFile& file)
{
    const auto& lines = file.lines();
    if (lines.empty()) file.fail(0, "empty OFF file");
    std::size_t li = 0;
    const auto head = lines[0].tokens[0];
    bool colored = false;
    if (head == "OFF") {
    } else if (head == "COFF") {
        colored = true;
    } else {
        file.fail(lines[0].number, "expected OFF or COFF header");
    }

    long long nv = 0, nf = 0;
    if (lines[0].tokens.size() >= 3) {
        nv = file.to_int(lines[0], 1);
        nf = file.to_int(lines[0], 2);
        li = 1;
    } else {
        if (lines.size() < 2) file.fail(lines[0].number, "missing counts line");
        nv = file.to_int(lines[1], 0);
        nf = file.to_int(lines[1], 1);
        li = 2;
    }
    if (nv < 0 || nf < 0) file.fail(lines[li - 1].number, "negative element count");
    if (lines.size() < li + static_cast<std::size_t>(nv + nf)) file.fail(lines.back().number, "truncated OFF file");

    VertexMatrix v(nv, 3);
    VertexAttributes attr;
    if (colored) attr.colors.resize(nv, 3);
    bool float_colors = false;
    if (colored && nv > 0) {
        const auto& l = lines[li];
        if (l.tokens.size() >= 6) float_colors = l.tokens[3].find('.') != std::string_view::npos;
    }
    for (long long i = 0; i < nv; ++i) {
        const auto& l = lines[li + static_cast<std::size_t>(i)];
        for (int c = 0; c < 3; ++c) v(i, c) = file.to_double(l, static_cast<std::size_t>(c));
        if (colored) {
            if (l.tokens.size() < 6) file.fail(l.number, "COFF vertex without color");
            for (int c = 0; c < 3; ++c) {
                const double raw = file.to_double(l, static_cast<std::size_t>(3 + c));
                attr.colors(i, c) = float_colors ? raw : raw / 255.0;
            }
        }
    }
    li += static_cast<std::size_t>(nv);

    std::vector<std::array<int, 3>> faces;
    faces.reserve(static_cast<std::size_t>(nf));
    for (long long i = 0; i < nf; ++i) {
        const auto& l = lines[li + static_cast<std::size_t>(i)];
        const long long n = file.to_int(l, 0);
        if (n != 3) file.fail(l.number, "only triangular faces are supported");
        std::array<int, 3> tri{};
        for (int c = 0; c < 3; ++c) tri[c] = checked_index(file, l, file.to_int(l, static_cast<std::size_t>(1 + c)), nv);
        faces.push_back(tri);
    }
    return build(file, std::move(v), std::move(faces), std::move(attr));
}

TriangleMesh read_obj(const TextFile& file)
{
    std::vector<std::array<double, 3>> pos;
    std::vector<std::array<double, 3>> col;
    std::vector<std::array<double, 2>> tex;
    std::vector<std::array<int, 3>> faces;
    std::vector<std::array<int, 3>> face_tex;
    bool face_tex_complete = true;

    auto resolve = [&](const Line& l, std::string_view tok, long long count) -> long long {
        long long raw = 0;
        const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), raw);
        if (res.ec != std::errc()) file.fail(l.number, "bad face index '" + std::string(tok) + "'");
        if (raw < 0) return count + raw;
        return raw - 1;
    };

    for (const auto& l : file.lines()) {
        const auto key = l.tokens[0];
        if (key == "v") {
            pos.push_back({file.to_double(l, 1), file.to_double(l, 2), file.to_double(l, 3)});
            if (l.tokens.size() >= 7) {
                col.push_back({file.to_double(l, 4), file.to_double(l, 5), file.to_double(l, 6)});
            }
        } else if (key == "vt") {
            tex.push_back({file.to_double(l, 1), file.to_double(l, 2)});
        } else if (key == "f") {
            if (l.tokens.size() != 4) file.fail(l.number, "only triangular faces are supported");
            std::array<int, 3> tri{};
            std::array<int, 3> tt{-1, -1, -1};
            for (int c = 0; c < 3; ++c) {
                const auto tok = l.tokens[static_cast<std::size_t>(1 + c)];
                const auto slash = tok.find('/');
                tri[c] = checked_index(
                    file, l, resolve(l, tok.substr(0, slash), static_cast<long long>(pos.size())),
                    static_cast<long long>(pos.size()));
                if (slash != std::string_view::npos) {
                    const auto rest = tok.substr(slash + 1);
                    const auto slash2 = rest.find('/');
                    const auto t = rest.substr(0, slash2);
                    if (!t.empty()) tt[c] = static_cast<int>(resolve(l, t, static_cast<long long>(tex.size())));
                }
                if (tt[c] < 0) face_tex_complete = false;
            }
            faces.push_back(tri);
            face_tex.push_back(tt);
        }
    }

    const auto nv = static_cast<Eigen::Index>(pos.size());
    VertexMatrix v(nv, 3);
    for (Eigen::Index i = 0; i < nv; ++i) {
        for (int c = 0; c < 3; ++c) v(i, c) = pos[static_cast<std::size_t>(i)][c];
    }
    VertexAttributes attr;
    if (!col.empty() && static_cast<Eigen::Index>(col.size()) == nv) {
        attr.colors.resize(nv, 3);
        for (Eigen::Index i = 0; i < nv; ++i) {
            for (int c = 0; c < 3; ++c) attr.colors(i, c) = col[static_cast<std::size_t>(i)][c];
        }
    }
    // per-vertex texture coordinates only when every corner agrees on one vt per vertex
    if (!tex.empty() && face_tex_complete && !faces.empty()) {
        std::vector<int> vt_of(static_cast<std::size_t>(nv), -1);
        bool consistent = true;
        for (std::size_t f = 0; f < faces.size() && consistent; ++f) {
            for (int c = 0; c < 3; ++c) {
                const int vi = faces[f][c];
                const int ti = face_tex[f][c];
                if (vi < 0 || vi >= nv || ti < 0 || ti >= static_cast<int>(tex.size())) {
                    consistent = false;
                    break;
                }
                auto& slot = vt_of[static_cast<std::size_t>(vi)];
                if (slot < 0) slot = ti;
                else if (tex[static_cast<std::size_t>(slot)] != tex[static_cast<std::size_t>(ti)]) consistent = false;
            }
        }
        if (consistent && std::all_of(vt_of.begin(), vt_of.end(), [](int t) { return t >= 0; })) {
            attr.texcoords.resize(nv, 2);
            for (Eigen::Index i = 0; i < nv; ++i) {
                const auto& t = tex[static_cast<std::size_t>(vt_of[static_cast<std::size_t>(i)])];
                attr.texcoords(i, 0) = t[0];
                attr.texcoords(i, 1) = t[1];
            }
        }
    }
    return build(file, std::move(v), std::move(faces), std::move(attr));
}

struct PlyElement
{
    std::string name;
    long long count = 0;
    std::vector<std::string> properties; // scalar names; list properties prefixed by "list:"
};

TriangleMesh read_ply(const TextFile& file)
{
    const auto& lines = file.lines();
    if (lines.empty() || lines[0].tokens[0] != "ply") file.fail(1, "missing 'ply' magic");
    std::vector<PlyElement> elements;
    std::size_t li = 1;
    bool ascii = false;
    for (; li < lines.size(); ++li) {
        const auto& l = lines[li];
        const auto key = l.tokens[0];
        if (key == "end_header") {
            ++li;
            break;
        }
        if (key == "format") {
            if (l.tokens.size() < 2) file.fail(l.number, "bad format line");
            if (l.tokens[1] != "ascii") file.fail(l.number, "only ascii PLY is supported");
            ascii = true;
        } else if (key == "element") {
            if (l.tokens.size() < 3) file.fail(l.number, "bad element line");
            elements.push_back({std::string(l.tokens[1]), file.to_int(l, 2), {}});
        } else if (key == "property") {
            if (elements.empty()) file.fail(l.number, "property before element");
            if (l.tokens.size() >= 5 && l.tokens[1] == "list") {
                elements.back().properties.push_back("list:" + std::string(l.tokens[4]));
            } else if (l.tokens.size() >= 3) {
                elements.back().properties.push_back(std::string(l.tokens[2]));
            } else {
                file.fail(l.number, "bad property line");
            }
        }
    }
    if (!ascii) file.fail(1, "missing format line");

    VertexMatrix v;
    VertexAttributes attr;
    std::vector<std::array<int, 3>> faces;
    long long nv = 0;
    for (const auto& el : elements) {
        if (el.count < 0) file.fail(0, "negative element count");
        if (li + static_cast<std::size_t>(el.count) > lines.size()) file.fail(lines.back().number, "truncated PLY body");
        if (el.name == "vertex") {
            nv = el.count;
            std::map<std::string, std::size_t> col;
            for (std::size_t i = 0; i < el.properties.size(); ++i) col[el.properties[i]] = i;
            for (const char* req : {"x", "y", "z"}) {
                if (!col.count(req)) file.fail(0, std::string("vertex element lacks property ") + req);
            }
            const bool has_rgb = col.count("red") && col.count("green") && col.count("blue");
            std::string un, vn;
            for (const auto& [a, b] : {std::pair{"u", "v"}, std::pair{"s", "t"}, std::pair{"texture_u", "texture_v"}}) {
                if (col.count(a) && col.count(b)) {
                    un = a;
                    vn = b;
                    break;
                }
            }
            v.resize(nv, 3);
            if (has_rgb) attr.colors.resize(nv, 3);
            if (!un.empty()) attr.texcoords.resize(nv, 2);
            for (long long i = 0; i < nv; ++i) {
                const auto& l = lines[li++];
                v(i, 0) = file.to_double(l, col["x"]);
                v(i, 1) = file.to_double(l, col["y"]);
                v(i, 2) = file.to_double(l, col["z"]);
                if (has_rgb) {
                    attr.colors(i, 0) = file.to_double(l, col["red"]) / 255.0;
                    attr.colors(i, 1) = file.to_double(l, col["green"]) / 255.0;
                    attr.colors(i, 2) = file.to_double(l, col["blue"]) / 255.0;
                }
                if (!un.empty()) {
                    attr.texcoords(i, 0) = file.to_double(l, col[un]);
                    attr.texcoords(i, 1) = file.to_double(l, col[vn]);
                }
            }
        } else if (el.name == "face") {
            const auto it = std::find_if(el.properties.begin(), el.properties.end(), [](const std::string& p) {
                return p == "list:vertex_indices" || p == "list:vertex_index";
            });
            if (it == el.properties.end()) file.fail(0, "face element lacks vertex_indices");
            if (it != el.properties.begin()) file.fail(0, "vertex_indices must be the first face property");
            for (long long i = 0; i < el.count; ++i) {
                const auto& l = lines[li++];
                if (file.to_int(l, 0) != 3) file.fail(l.number, "only triangular faces are supported");
                std::array<int, 3> tri{};
                for (int c = 0; c < 3; ++c) tri[c] = checked_index(file, l, file.to_int(l, static_cast<std::size_t>(1 + c)), nv);
                faces.push_back(tri);
            }
        } else {
            li += static_cast<std::size_t>(el.count);
        }
    }
    return build(file, std::move(v), std::move(faces), std::move(attr));
}

void put_double(std::string& out, double x)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, 9);
    out.append(buf, res.ptr);
}

void put_int(std::string& out, long long x)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    out.append(buf, res.ptr);
}

int color_byte(double c)
{
    return static_cast<int>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
}

std::string write_off(const TriangleMesh& mesh)
{
    const bool colored = mesh.attributes().colors.size() != 0;
    std::string out = colored ? "COFF\n" : "OFF\n";
    put_int(out, mesh.num_vertices());
    out += ' ';
    put_int(out, mesh.num_faces());
    out += " 0\n";
    for (int i = 0; i < mesh.num_vertices(); ++i) {
        for (int c = 0; c < 3; ++c) {
            if (c) out += ' ';
            put_double(out, mesh.vertices()(i, c));
        }
        if (colored) {
            for (int c = 0; c < 3; ++c) {
                out += ' ';
                put_int(out, color_byte(mesh.attributes().colors(i, c)));
            }
            out += " 255";
        }
        out += '\n';
    }
    for (int f = 0; f < mesh.num_faces(); ++f) {
        out += '3';
        for (int c = 0; c < 3; ++c) {
            out += ' ';
            put_int(out, mesh.faces()(f, c));
        }
        out += '\n';
    }
    return out;
}

std::string write_obj(const TriangleMesh& mesh)
{
    const auto& attr = mesh.attributes();
    std::string out;
    for (int i = 0; i < mesh.num_vertices(); ++i) {
        out += 'v';
        for (int c = 0; c < 3; ++c) {
            out += ' ';
            put_double(out, mesh.vertices()(i, c));
        }
        if (attr.colors.size()) {
            for (int c = 0; c < 3; ++c) {
                out += ' ';
                put_double(out, attr.colors(i, c));
            }
        }
        out += '\n';
    }
    const bool textured = attr.texcoords.size() != 0;
    if (textured) {
        for (int i = 0; i < mesh.num_vertices(); ++i) {
            out += "vt ";
            put_double(out, attr.texcoords(i, 0));
            out += ' ';
            put_double(out, attr.texcoords(i, 1));
            out += '\n';
        }
    }
    for (int f = 0; f < mesh.num_faces(); ++f) {
        out += 'f';
        for (int c = 0; c < 3; ++c) {
            out += ' ';
            put_int(out, mesh.faces()(f, c) + 1);
            if (textured) {
                out += '/';
                put_int(out, mesh.faces()(f, c) + 1);
            }
        }
        out += '\n';
    }
    return out;
}

std::string write_ply(const TriangleMesh& mesh)
{
    const auto& attr = mesh.attributes();
    const bool colored = attr.colors.size() != 0;
    const bool textured = attr.texcoords.size() != 0;
    std::string out = "ply\nformat ascii 1.0\nelement vertex ";
    put_int(out, mesh.num_vertices());
    out += "\nproperty double x\nproperty double y\nproperty double z\n";
    if (colored) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    if (textured) out += "property double u\nproperty double v\n";
    out += "element face ";
    put_int(out, mesh.num_faces());
    out += "\nproperty list uchar int vertex_indices\nend_header\n";
    for (int i = 0; i < mesh.num_vertices(); ++i) {
        for (int c = 0; c < 3; ++c) {
            if (c) out += ' ';
            put_double(out, mesh.vertices()(i, c));
        }
        if (colored) {
            for (int c = 0; c < 3; ++c) {
                out += ' ';
                put_int(out, color_byte(attr.colors(i, c)));
            }
        }
        if (textured) {
            out += ' ';
            put_double(out, attr.texcoords(i, 0));
            out += ' ';
            put_double(out, attr.texcoords(i, 1));
        }
        out += '\n';
    }
    for (int f = 0; f < mesh.num_faces(); ++f) {
        out += '3';
        for (int c = 0; c < 3; ++c) {
            out += ' ';
            put_int(out, mesh.faces()(f, c));
        }
        out += '\n';
    }
    return out;
}

} // namespace

std::optional<MeshFormat> parse_format_name(std::string_view name)
{
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (!lower.empty() && lower[0] == '.') lower.erase(0, 1);
    if (lower == "off") return MeshFormat::OFF;
    if (lower == "obj") return MeshFormat::OBJ;
    if (lower == "ply") return MeshFormat::PLY;
    return std::nullopt;
}

MeshFormat sniff_format(const fs::path& path)
{
    if (auto f = parse_format_name(path.extension().string())) return *f;
    std::ifstream in(path);
    std::string first;
    in >> first;
    if (first == "OFF" || first == "COFF") return MeshFormat::OFF;
    if (first == "ply") return MeshFormat::PLY;
    if (first == "v" || first == "#" || first == "o" || first == "g" || first == "mtllib") return MeshFormat::OBJ;
    throw ParseError(path.string(), 1, "cannot determine mesh format");
}

TriangleMesh load_mesh(const fs::path& path, std::optional<MeshFormat> format)
{
    if (!fs::exists(path)) throw ParseError(path.string(), 0, "file does not exist");
    const MeshFormat fmt = format ? *format : sniff_format(path);
    const TextFile file(path);
    switch (fmt) {
    case MeshFormat::OFF: return read_off(file);
    case MeshFormat::OBJ: return read_obj(file);
    case MeshFormat::PLY: return read_ply(file);
    }
    throw ParseError(path.string(), 0, "unknown format");
}

void save_mesh(const TriangleMesh& mesh, const fs::path& path, std::optional<MeshFormat> format)
{
    const MeshFormat fmt = format ? *format : parse_format_name(path.extension().string()).value_or(MeshFormat::OFF);
    std::string text;
    switch (fmt) {
    case MeshFormat::OFF: text = write_off(mesh); break;
    case MeshFormat::OBJ: text = write_obj(mesh); break;
    case MeshFormat::PLY: text = write_ply(mesh); break;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error("write failed for " + path.string());
}

} // namespace speccorr
