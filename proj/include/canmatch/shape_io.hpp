#pragma once

// Plain-text shape formats:
//   XYZ  - one "x y z" triple per line, whitespace-separated decimal.
//   OFF  - "OFF" header, "nv nf 0" counts, vertex lines, "3 i j k" face lines.
//   map  - line 0 "n_src n_dst", then one destination index per line.
// Coordinates round-trip losslessly through 17 significant digits.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "canmatch/errors.hpp"
#include "canmatch/geom.hpp"

namespace canmatch {

namespace detail_io {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& tok, long line) {
    try {
        std::size_t pos = 0;
        double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ParseError("expected a number, got '" + tok + "'", line);
    }
}

inline long parse_int(const std::string& tok, long line) {
    try {
        std::size_t pos = 0;
        long v = std::stol(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ParseError("expected an integer, got '" + tok + "'", line);
    }
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "' for reading");
    return in;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    return out;
}

}  // namespace detail_io

inline void save_cloud_xyz(const std::string& path, const PointCloud& p) {
    auto out = detail_io::open_out(path);
    for (int i = 0; i < p.size(); ++i)
        out << detail_io::format_double(p.coords(i, 0)) << ' ' << detail_io::format_double(p.coords(i, 1))
            << ' ' << detail_io::format_double(p.coords(i, 2)) << '\n';
}

inline PointCloud load_cloud_xyz(const std::string& path) {
    auto in = detail_io::open_in(path);
    std::vector<double> vals;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tok;
        int got = 0;
        while (ls >> tok) {
            vals.push_back(detail_io::parse_double(tok, line_no));
            ++got;
        }
        if (got != 0 && got != 3) throw ParseError("expected 3 coordinates per line, got " + std::to_string(got), line_no);
    }
    Mat coords(static_cast<Eigen::Index>(vals.size() / 3), 3);
    for (Eigen::Index i = 0; i < coords.rows(); ++i)
        for (Eigen::Index j = 0; j < 3; ++j) coords(i, j) = vals[static_cast<std::size_t>(3 * i + j)];
    PointCloud p(std::move(coords), {}, std::filesystem::path(path).stem().string());
    return p;
}

inline void save_cloud_off(const std::string& path, const PointCloud& p) {
    auto out = detail_io::open_out(path);
    out << "OFF\n" << p.size() << ' ' << p.faces.size() << " 0\n";
    for (int i = 0; i < p.size(); ++i)
        out << detail_io::format_double(p.coords(i, 0)) << ' ' << detail_io::format_double(p.coords(i, 1))
            << ' ' << detail_io::format_double(p.coords(i, 2)) << '\n';
    for (const auto& f : p.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

inline PointCloud load_cloud_off(const std::string& path) {
    auto in = detail_io::open_in(path);
    std::string line;
    long line_no = 0;

    auto next_tokens = [&](std::vector<std::string>& toks) {
        toks.clear();
        while (std::getline(in, line)) {
            ++line_no;
            std::istringstream ls(line);
            std::string tok;
            while (ls >> tok) toks.push_back(tok);
            if (!toks.empty()) return true;
        }
        return false;
    };

    std::vector<std::string> toks;
    if (!next_tokens(toks) || toks[0] != "OFF") throw ParseError("missing OFF header", line_no);
    if (!next_tokens(toks) || toks.size() < 2) throw ParseError("missing counts line", line_no);
    long nv = detail_io::parse_int(toks[0], line_no);
    long nf = detail_io::parse_int(toks[1], line_no);
    if (nv < 0 || nf < 0) throw ParseError("negative counts", line_no);

    Mat coords(nv, 3);
    for (long i = 0; i < nv; ++i) {
        if (!next_tokens(toks) || toks.size() != 3) throw ParseError("expected a vertex line", line_no);
        for (int j = 0; j < 3; ++j) coords(i, j) = detail_io::parse_double(toks[static_cast<std::size_t>(j)], line_no);
    }
    std::vector<std::array<int, 3>> faces;
    faces.reserve(static_cast<std::size_t>(nf));
    for (long i = 0; i < nf; ++i) {
        if (!next_tokens(toks) || toks.size() != 4) throw ParseError("expected a face line '3 i j k'", line_no);
        if (detail_io::parse_int(toks[0], line_no) != 3) throw ParseError("only triangle faces are supported", line_no);
        faces.push_back({static_cast<int>(detail_io::parse_int(toks[1], line_no)),
                         static_cast<int>(detail_io::parse_int(toks[2], line_no)),
                         static_cast<int>(detail_io::parse_int(toks[3], line_no))});
    }
    return PointCloud(std::move(coords), std::move(faces), std::filesystem::path(path).stem().string());
}

// Dispatch on extension: .xyz or .off.
inline PointCloud load_cloud(const std::string& path) {
    std::string ext = std::filesystem::path(path).extension().string();
    if (ext == ".off" || ext == ".OFF") return load_cloud_off(path);
    return load_cloud_xyz(path);
}

inline void save_cloud(const std::string& path, const PointCloud& p) {
    std::string ext = std::filesystem::path(path).extension().string();
    if (ext == ".off" || ext == ".OFF")
        save_cloud_off(path, p);
    else
        save_cloud_xyz(path, p);
}

inline void save_map(const std::string& path, const IndexMap& m) {
    auto out = detail_io::open_out(path);
    out << m.src_size << ' ' << m.dst_size << '\n';
    for (int v : m.targets) out << v << '\n';
}

inline IndexMap load_map(const std::string& path) {
    auto in = detail_io::open_in(path);
    std::string line;
    long line_no = 0;
    if (!std::getline(in, line)) throw ParseError("empty map file", 1);
    ++line_no;
    std::istringstream head(line);
    std::string a, b;
    if (!(head >> a >> b)) throw ParseError("expected 'n_src n_dst' header", line_no);
    long src = detail_io::parse_int(a, line_no), dst = detail_io::parse_int(b, line_no);
    std::vector<int> targets;
    targets.reserve(static_cast<std::size_t>(src));
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tok;
        while (ls >> tok) targets.push_back(static_cast<int>(detail_io::parse_int(tok, line_no)));
    }
    if (static_cast<long>(targets.size()) != src)
        throw ParseError("expected " + std::to_string(src) + " indices, got " + std::to_string(targets.size()),
                         line_no);
    try {
        return IndexMap(static_cast<int>(src), static_cast<int>(dst), std::move(targets));
    } catch (const Error& e) {
        throw ParseError(std::string("invalid map: ") + e.what(), line_no);
    }
}

}  // namespace canmatch
