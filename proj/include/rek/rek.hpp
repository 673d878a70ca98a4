#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rek/error.hpp"
#include "rek/geometry.hpp"
#include "rek/io.hpp"
#include "rek/knowledge.hpp"
#include "rek/rng.hpp"
#include "rek/scene.hpp"

namespace rek {

enum class LinkScenario { CompleteOpenness, ImpendingBlockage, CompleteBlockage };

inline const char* to_string(LinkScenario s) {
    switch (s) {
        case LinkScenario::CompleteOpenness: return "complete_openness";
        case LinkScenario::ImpendingBlockage: return "impending_blockage";
        case LinkScenario::CompleteBlockage: return "complete_blockage";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Contribution formulas
// ---------------------------------------------------------------------------

/// Direct distance over reflected path length, scaled by c.
inline double reflection_contribution(const Point3& tx, const Point3& rx, const Point3& rp, double c) {
    const double path = distance(rx, rp) + distance(rp, tx);
    if (!(path > 0.0)) throw GeometryError("reflection path has zero length");
    return c * distance(tx, rx) / path;
}

/// Two-ray ground reflection on the plane z = 0.
inline double ground_reflection_contribution(const Point3& tx, const Point3& rx, double c) {
    const double h_t = tx.z;
    const double h_r = rx.z;
    if (h_t + h_r == 0.0) throw GeometryError("ground reflection needs h_t + h_r != 0");
    const double horizontal = horizontal_distance(tx, rx);
    const double d_t = h_t * horizontal / (h_t + h_r);
    const double d_r = horizontal - d_t;
    return c * distance(tx, rx) / std::hypot(d_t + d_r, h_t + h_r);
}

/// Signed Fresnel clearance of the blocker roof, positive when obstructed.
inline double diffraction_contribution(const Scatterer& blocker, const Point3& tx, const Point3& rx, double c) {
    const Point3 center = blocker.center();
    const double d_t = horizontal_distance(tx, center);
    const double d_r = horizontal_distance(rx, center);
    const double fresnel = fresnel_center_height(tx.z, rx.z, d_t, d_r);
    return c * (blocker.top() - fresnel);
}

/// Center-to-link distance over the footprint diagonal, scaled by c.
inline double blockage_contribution(const Scatterer& blocker, const Point3& tx, const Point3& rx, double c) {
    const double footprint = std::hypot(blocker.length(), blocker.width());
    if (!(footprint > 0.0)) throw GeometryError("blocker has a degenerate footprint");
    return point_segment_distance(blocker.center(), tx, rx) * c / footprint;
}

/// Shortest reflected path gets c_ref_init; each following one gets
/// c_ref_decrement less, never below zero. Equal path lengths are ordered by id.
inline std::map<int, double> assign_reflection_coefficients(const std::vector<ReflectionGeometry>& geoms,
                                                            const KnowledgeCoefficients& coeffs) {
    std::vector<const ReflectionGeometry*> order;
    order.reserve(geoms.size());
    for (const auto& g : geoms) order.push_back(&g);
    std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
        if (a->path_length != b->path_length) return a->path_length < b->path_length;
        return a->scatterer_id < b->scatterer_id;
    });
    std::map<int, double> out;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        const double c = coeffs.c_ref_init - static_cast<double>(rank) * coeffs.c_ref_decrement;
        out[order[rank]->scatterer_id] = std::max(0.0, c);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Per-link knowledge
// ---------------------------------------------------------------------------

struct ReflectionEntry {
    int scatterer_id = 0;
    double coefficient = 0.0;
    double path_length = 0.0;
    double contribution = 0.0;
};

struct REKVector {
    std::size_t rx_index = 0;
    LinkScenario scenario = LinkScenario::CompleteOpenness;

    std::vector<int> effective_ids;
    std::vector<int> blockage_ids;
    std::vector<int> impending_ids;
    std::optional<int> dominant_blocker;

    std::vector<ReflectionEntry> reflections;
    double ground_reflection = 0.0;
    double diffraction = 0.0;
    double blockage = 0.0;

    /// Aggregated reflection, diffraction and blockage contributions.
    double rc = 0.0;
    double dc = 0.0;
    double bc = 0.0;

    std::vector<std::string> diagnostics;

    /// Scatterers the knowledge attributes a contribution to: reflectors
    /// followed by the dominant blocker.
    std::vector<int> contributing_ids() const {
        std::vector<int> ids;
        for (const auto& r : reflections) {
            if (r.contribution > 0.0) ids.push_back(r.scatterer_id);
        }
        if (dominant_blocker && std::find(ids.begin(), ids.end(), *dominant_blocker) == ids.end()) {
            ids.push_back(*dominant_blocker);
        }
        return ids;
    }
};

/// Runs the seven-step construction for one receiver:
/// effective range, blockers, impending/open split, scatterer reflections,
/// ground reflection (open links), diffraction and blockage (blocked links),
/// and aggregation into (RC, DC, BC).
inline REKVector construct_rek(const Scene& scene, std::size_t rx_index, const KnowledgeCoefficients& coeffs) {
    if (rx_index >= scene.receivers.size()) {
        throw ValidationError("receiver index " + std::to_string(rx_index) + " out of range");
    }
    coeffs.validate();
    const Point3& tx = scene.tx;
    const Point3& rx = scene.receivers[rx_index];

    REKVector out;
    out.rx_index = rx_index;
    if (distance(tx, rx) == 0.0) throw GeometryError("receiver coincides with transmitter");

    // Step 1
    out.effective_ids = effective_scatterers(scene, tx, rx);

    // Steps 2-3
    std::vector<const Scatterer*> non_blocking;
    for (int id : out.effective_ids) {
        const Scatterer& s = *scene.find(id);
        switch (classify_scatterer(s, tx, rx, coeffs)) {
            case ScattererClass::Blockage: out.blockage_ids.push_back(id); break;
            case ScattererClass::ImpendingBlockage:
                out.impending_ids.push_back(id);
                non_blocking.push_back(&s);
                break;
            case ScattererClass::Open: non_blocking.push_back(&s); break;
        }
    }
    if (!out.blockage_ids.empty()) out.scenario = LinkScenario::CompleteBlockage;
    else if (!out.impending_ids.empty()) out.scenario = LinkScenario::ImpendingBlockage;
    else out.scenario = LinkScenario::CompleteOpenness;

    // Step 4 (and the scatterer part of steps 5-6): image-method reflections
    std::vector<ReflectionGeometry> geoms;
    for (const Scatterer* s : non_blocking) {
        auto g = reflection_point(tx, rx, *s);
        if (g.valid()) {
            geoms.push_back(g);
        } else {
            out.diagnostics.push_back("scatterer " + std::to_string(s->id()) + ": " + to_string(g.status));
        }
    }
    const auto coefficients = assign_reflection_coefficients(geoms, coeffs);
    for (const auto& g : geoms) {
        ReflectionEntry e;
        e.scatterer_id = g.scatterer_id;
        e.coefficient = coefficients.at(g.scatterer_id);
        e.path_length = g.path_length;
        e.contribution = reflection_contribution(tx, rx, g.point, e.coefficient);
        out.reflections.push_back(e);
    }
    std::sort(out.reflections.begin(), out.reflections.end(),
              [](const auto& a, const auto& b) { return a.scatterer_id < b.scatterer_id; });

    switch (out.scenario) {
        case LinkScenario::ImpendingBlockage: {
            Rng rng = substream(coeffs.rng_seed, "rek", rx_index);
            out.diffraction = uniform01(rng);
            out.blockage = uniform01(rng);
            break;
        }
        case LinkScenario::CompleteOpenness:
            out.ground_reflection = ground_reflection_contribution(tx, rx, coeffs.c_ref_g);
            break;
        case LinkScenario::CompleteBlockage: {
            // the blocker with the largest blockage contribution carries the
            // diffraction and blockage knowledge
            double best = -1.0;
            for (int id : out.blockage_ids) {
                const double kb = blockage_contribution(*scene.find(id), tx, rx, coeffs.c_block);
                if (kb > best) {
                    best = kb;
                    out.dominant_blocker = id;
                }
            }
            for (int id : out.blockage_ids) {
                if (id != *out.dominant_blocker) {
                    out.diagnostics.push_back("additional blocker " + std::to_string(id));
                }
            }
            const Scatterer& blocker = *scene.find(*out.dominant_blocker);
            out.blockage = best;
            try {
                out.diffraction = diffraction_contribution(blocker, tx, rx, coeffs.c_df);
            } catch (const GeometryError& e) {
                out.diagnostics.push_back(std::string("diffraction skipped: ") + e.what());
            }
            break;
        }
    }

    // Step 7
    for (const auto& r : out.reflections) out.rc += r.contribution;
    out.rc += out.ground_reflection;
    out.dc = std::max(0.0, out.diffraction);
    out.bc = out.blockage;
    return out;
}

// ---------------------------------------------------------------------------
// Trajectory spectra
// ---------------------------------------------------------------------------

struct REKSpectrum {
    std::vector<std::size_t> trajectory;
    /// Row j holds (RC, DC, BC) of trajectory[j].
    std::vector<std::array<double, 3>> rows;
    std::vector<LinkScenario> scenarios;

    std::size_t size() const { return rows.size(); }
};

inline REKSpectrum rek_spectrum(const Scene& scene, const std::vector<std::size_t>& trajectory,
                                const KnowledgeCoefficients& coeffs) {
    REKSpectrum out;
    out.trajectory = trajectory;
    out.rows.reserve(trajectory.size());
    for (std::size_t idx : trajectory) {
        const auto v = construct_rek(scene, idx, coeffs);
        out.rows.push_back({v.rc, v.dc, v.bc});
        out.scenarios.push_back(v.scenario);
    }
    return out;
}

/// Receiver indices of grid column `col`, ordered by row.
inline std::vector<std::size_t> grid_column(const GridSpec& grid, int col) {
    if (col < 0 || col >= grid.cols) throw ValidationError("trajectory column out of range");
    std::vector<std::size_t> out;
    out.reserve(static_cast<std::size_t>(grid.rows));
    for (int r = 0; r < grid.rows; ++r) {
        out.push_back(static_cast<std::size_t>(r) * static_cast<std::size_t>(grid.cols) +
                      static_cast<std::size_t>(col));
    }
    return out;
}

inline std::string spectrum_csv(const REKSpectrum& s) {
    std::ostringstream out;
    out << "rx_index,RC,DC,BC\n";
    for (std::size_t j = 0; j < s.rows.size(); ++j) {
        out << s.trajectory[j] << ',' << format_double(s.rows[j][0]) << ',' << format_double(s.rows[j][1])
            << ',' << format_double(s.rows[j][2]) << '\n';
    }
    return out.str();
}

inline REKSpectrum parse_spectrum_csv(const std::string& text) {
    REKSpectrum s;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "rx_index,RC,DC,BC") {
        throw ParseError("spectrum CSV must start with header rx_index,RC,DC,BC");
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::array<std::string, 4> f;
        for (auto& x : f) {
            if (!std::getline(row, x, ',')) throw ParseError("spectrum CSV row has fewer than 4 fields");
        }
        try {
            s.trajectory.push_back(std::stoull(f[0]));
            s.rows.push_back({std::stod(f[1]), std::stod(f[2]), std::stod(f[3])});
        } catch (const std::exception&) {
            throw ParseError("spectrum CSV row is not numeric: " + line);
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Coefficient search
// ---------------------------------------------------------------------------

/// A (receiver, scatterer) pair with a reference class.
struct LabeledLink {
    std::size_t rx_index = 0;
    int scatterer_id = 0;
    ScattererClass label = ScattererClass::Open;
};

/// Candidate grid for c_diag: 0.55, 0.60, ..., 1.50.
inline std::vector<double> c_diag_candidates() {
    std::vector<double> out;
    for (int k = 11; k <= 30; ++k) out.push_back(k / 20.0);
    return out;
}

/// c_diag maximizing agreement with the labels; smallest wins ties.
inline double grid_search_c_diag(const Scene& scene, const std::vector<LabeledLink>& labels) {
    if (labels.empty()) throw ValidationError("grid search needs at least one labeled link");
    struct Prepared {
        double dis;
        double diagonal;
        ScattererClass label;
    };
    std::vector<Prepared> prepared;
    prepared.reserve(labels.size());
    for (const auto& l : labels) {
        if (l.rx_index >= scene.receivers.size()) throw ValidationError("labeled receiver out of range");
        const Scatterer* s = scene.find(l.scatterer_id);
        if (!s) throw ValidationError("labeled scatterer " + std::to_string(l.scatterer_id) + " not in scene");
        prepared.push_back({point_segment_distance(s->center(), scene.tx, scene.receivers[l.rx_index]),
                            s->diagonal_length(), l.label});
    }
    double best_c = 0.0;
    long best_hits = -1;
    for (double c : c_diag_candidates()) {
        long hits = 0;
        for (const auto& p : prepared) hits += classify_by_distance(p.dis, p.diagonal, c) == p.label;
        if (hits > best_hits) {
            best_hits = hits;
            best_c = c;
        }
    }
    return best_c;
}

}  // namespace rek
