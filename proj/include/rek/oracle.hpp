#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rek/error.hpp"
#include "rek/geometry.hpp"
#include "rek/io.hpp"
#include "rek/scene.hpp"

namespace rek::oracle {

inline constexpr double kSpeedOfLight = 299792458.0;

/// Friis free-space path loss in dB.
inline double free_space_path_loss(double d, double f) {
    if (!(d > 0.0)) throw GeometryError("free-space path loss needs a positive distance");
    if (!(f > 0.0)) throw GeometryError("free-space path loss needs a positive frequency");
    return 20.0 * std::log10(4.0 * std::numbers::pi * d * f / kSpeedOfLight);
}

/// Single knife-edge excess loss in dB for Fresnel-Kirchhoff parameter v.
inline double knife_edge_loss(double v) {
    if (v <= -0.78) return 0.0;
    const double t = v - 0.1;
    return 6.9 + 20.0 * std::log10(std::sqrt(t * t + 1.0) + t);
}

/// True when the open segment (a, b) passes through the open interior of the box.
/// Touching a face, edge or corner does not count.
inline bool segment_intersects_box(const Point3& a, const Point3& b, const Scatterer& s) {
    const Vec3 d = b - a;
    double t_enter = 0.0;
    double t_exit = 1.0;
    for (int k = 0; k < 3; ++k) {
        const double lo = s.p_min()[k];
        const double hi = s.p_max()[k];
        if (d[k] == 0.0) {
            if (!(a[k] > lo && a[k] < hi)) return false;
            continue;
        }
        double t1 = (lo - a[k]) / d[k];
        double t2 = (hi - a[k]) / d[k];
        if (t1 > t2) std::swap(t1, t2);
        t_enter = std::max(t_enter, t1);
        t_exit = std::min(t_exit, t2);
        if (!(t_enter < t_exit)) return false;
    }
    return t_enter < t_exit;
}

/// Any scatterer (other than `exclude_id`) obstructs the segment.
inline bool segment_blocked(const Scene& scene, const Point3& a, const Point3& b,
                            std::optional<int> exclude_id = std::nullopt) {
    for (const auto& s : scene.scatterers) {
        if (exclude_id && s.id() == *exclude_id) continue;
        if (segment_intersects_box(a, b, s)) return true;
    }
    return false;
}

enum class PathKind { Direct, ScattererReflection, GroundReflection, Diffraction };

inline const char* to_string(PathKind k) {
    switch (k) {
        case PathKind::Direct: return "direct";
        case PathKind::ScattererReflection: return "reflection";
        case PathKind::GroundReflection: return "ground";
        case PathKind::Diffraction: return "diffraction";
    }
    return "?";
}

struct PropPath {
    PathKind kind = PathKind::Direct;
    /// Reflecting or diffracting scatterer; -1 for direct and ground paths.
    int scatterer_id = -1;
    double length_m = 0.0;
    double excess_loss_db = 0.0;
    /// Received power for 1 W transmitted, in dB.
    double power_db = 0.0;

    friend bool operator==(const PropPath&, const PropPath&) = default;
};

struct PathLossSample {
    std::size_t rx_index = 0;
    double path_loss_db = 0.0;
    std::vector<PropPath> paths;
};

struct OracleOptions {
    bool ground_reflection = true;
    double ground_reflection_loss_db = 3.0;
    double scatterer_reflection_loss_db = 6.0;
    double floor_db = 250.0;
};

/// Direct, single-bounce specular (ground and scatterer faces) and single
/// knife-edge paths from the transmitter to one receiver.
inline std::vector<PropPath> trace_paths(const Scene& scene, std::size_t rx_index, const OracleOptions& opt = {}) {
    if (rx_index >= scene.receivers.size()) {
        throw ValidationError("receiver index " + std::to_string(rx_index) + " out of range");
    }
    const Point3& tx = scene.tx;
    const Point3& rx = scene.receivers[rx_index];
    const double f = scene.frequency_hz;
    const double direct = distance(tx, rx);
    if (!(direct > 0.0)) throw GeometryError("receiver coincides with transmitter");

    std::vector<PropPath> paths;
    const bool direct_blocked = segment_blocked(scene, tx, rx);
    if (!direct_blocked) {
        const double loss = free_space_path_loss(direct, f);
        paths.push_back({PathKind::Direct, -1, direct, 0.0, -loss});
    }

    if (opt.ground_reflection && tx.z > 0.0 && rx.z > 0.0) {
        const double s = tx.z / (tx.z + rx.z);
        const Point3 g{tx.x + (rx.x - tx.x) * s, tx.y + (rx.y - tx.y) * s, 0.0};
        if (!segment_blocked(scene, tx, g) && !segment_blocked(scene, g, rx)) {
            const double len = distance(tx, g) + distance(g, rx);
            const double loss = free_space_path_loss(len, f) + opt.ground_reflection_loss_db;
            paths.push_back({PathKind::GroundReflection, -1, len, opt.ground_reflection_loss_db, -loss});
        }
    }

    for (const auto& s : scene.scatterers) {
        if (s.contains(tx) || s.contains(rx)) continue;
        const auto geom = reflection_point(tx, rx, s);
        if (!geom.valid()) continue;
        if (segment_blocked(scene, tx, geom.point, s.id()) || segment_blocked(scene, geom.point, rx, s.id())) {
            continue;
        }
        const double loss = free_space_path_loss(geom.path_length, f) + opt.scatterer_reflection_loss_db;
        paths.push_back({PathKind::ScattererReflection, s.id(), geom.path_length,
                         opt.scatterer_reflection_loss_db, -loss});
    }

    if (direct_blocked) {
        // the most obstructing box (largest Fresnel parameter) on the direct path
        const double lambda = kSpeedOfLight / f;
        std::optional<PropPath> best;
        double best_v = -std::numeric_limits<double>::infinity();
        for (const auto& s : scene.scatterers) {
            if (!segment_intersects_box(tx, rx, s)) continue;
            const Point3 c = s.center();
            const double d_t = std::max(horizontal_distance(tx, c), 1e-3);
            const double d_r = std::max(horizontal_distance(rx, c), 1e-3);
            const double clearance = s.top() - fresnel_center_height(tx.z, rx.z, d_t, d_r);
            const double v = clearance * std::sqrt(2.0 * (d_t + d_r) / (lambda * d_t * d_r));
            if (v > best_v) {
                best_v = v;
                const double over_top = std::hypot(d_t, s.top() - tx.z) + std::hypot(d_r, s.top() - rx.z);
                const double excess = knife_edge_loss(v);
                const double loss = free_space_path_loss(direct, f) + excess;
                best = PropPath{PathKind::Diffraction, s.id(), std::max(over_top, direct), excess, -loss};
            }
        }
        if (best) paths.push_back(*best);
    }
    return paths;
}

/// Non-coherent power sum of all paths.
inline PathLossSample path_loss(const Scene& scene, std::size_t rx_index, const OracleOptions& opt = {}) {
    PathLossSample out;
    out.rx_index = rx_index;
    out.paths = trace_paths(scene, rx_index, opt);
    double total = 0.0;
    for (const auto& p : out.paths) total += std::pow(10.0, p.power_db / 10.0);
    out.path_loss_db = total > 0.0 ? -10.0 * std::log10(total) : opt.floor_db;
    return out;
}

/// Ids of scatterers carrying reflection or diffraction paths, strongest first,
/// each listed once at its best rank.
inline std::vector<int> rank_scatterers_by_power(const PathLossSample& sample, std::size_t top_n) {
    std::vector<const PropPath*> ranked;
    for (const auto& p : sample.paths) {
        if (p.scatterer_id >= 0) ranked.push_back(&p);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto* a, const auto* b) { return a->power_db > b->power_db; });
    std::vector<int> ids;
    std::set<int> seen;
    for (const auto* p : ranked) {
        if (ids.size() >= top_n) break;
        if (seen.insert(p->scatterer_id).second) ids.push_back(p->scatterer_id);
    }
    return ids;
}

inline std::string labels_csv(const std::vector<PathLossSample>& samples) {
    std::ostringstream out;
    out << "rx_index,path_loss_db,n_paths\n";
    for (const auto& s : samples) {
        out << s.rx_index << ',' << format_double(s.path_loss_db) << ',' << s.paths.size() << '\n';
    }
    return out.str();
}

inline std::string paths_csv(const std::vector<PathLossSample>& samples) {
    std::ostringstream out;
    out << "rx_index,kind,scatterer_id,length_m,power_db\n";
    for (const auto& s : samples) {
        for (const auto& p : s.paths) {
            out << s.rx_index << ',' << to_string(p.kind) << ',' << p.scatterer_id << ','
                << format_double(p.length_m) << ',' << format_double(p.power_db) << '\n';
        }
    }
    return out.str();
}

/// Reads rx_index,path_loss_db,n_paths rows back into (index, loss) pairs.
inline std::vector<std::pair<std::size_t, double>> parse_labels_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "rx_index,path_loss_db,n_paths") {
        throw ParseError("label CSV must start with header rx_index,path_loss_db,n_paths");
    }
    std::vector<std::pair<std::size_t, double>> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) throw ParseError("bad label row: " + line);
        try {
            out.emplace_back(std::stoull(line.substr(0, c1)), std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
        } catch (const std::exception&) {
            throw ParseError("bad label row: " + line);
        }
    }
    return out;
}

}  // namespace rek::oracle
