#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rek/error.hpp"
#include "rek/rng.hpp"
#include "rek/vec3.hpp"

namespace rek {

/// Axis-aligned building-like box. The line Boolean model represents it by
/// its diagonal segment from p_min to p_max.
class Scatterer {
public:
    Scatterer() = default;

    Scatterer(int id, Point3 p_min, Point3 p_max) : id_(id), p_min_(p_min), p_max_(p_max) {
        if (!is_finite(p_min) || !is_finite(p_max)) {
            throw ValidationError("scatterer " + std::to_string(id) + ": non-finite corner");
        }
        if (!(p_min.x < p_max.x && p_min.y < p_max.y && p_min.z < p_max.z)) {
            throw ValidationError("scatterer " + std::to_string(id) +
                                  ": min corner must be strictly below max corner on every axis");
        }
    }

    int id() const { return id_; }
    const Point3& p_min() const { return p_min_; }
    const Point3& p_max() const { return p_max_; }

    Point3 center() const { return (p_min_ + p_max_) * 0.5; }
    double diagonal_length() const { return distance(p_min_, p_max_); }
    /// x-extent
    double length() const { return p_max_.x - p_min_.x; }
    /// y-extent
    double width() const { return p_max_.y - p_min_.y; }
    /// z-extent
    double height() const { return p_max_.z - p_min_.z; }
    double top() const { return p_max_.z; }

    /// Closed-box containment.
    bool contains(const Point3& p) const {
        return p.x >= p_min_.x && p.x <= p_max_.x && p.y >= p_min_.y && p.y <= p_max_.y &&
               p.z >= p_min_.z && p.z <= p_max_.z;
    }

    friend bool operator==(const Scatterer&, const Scatterer&) = default;

private:
    int id_ = 0;
    Point3 p_min_;
    Point3 p_max_;
};

/// Regular receiver grid. Row r, column c sits at origin + (c*spacing, r*spacing).
struct GridSpec {
    Point3 origin;
    int rows = 120;
    int cols = 61;
    double spacing = 0.5;
    double height = 1.5;

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

inline std::vector<Point3> grid_receivers(const Point3& origin, int rows, int cols, double spacing,
                                          double height) {
    if (rows < 1 || cols < 1) {
        throw ValidationError("receiver grid needs at least one row and one column");
    }
    if (!(spacing > 0.0)) {
        throw ValidationError("receiver grid spacing must be positive");
    }
    std::vector<Point3> out;
    out.reserve(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            out.push_back({origin.x + c * spacing, origin.y + r * spacing, height});
        }
    }
    return out;
}

inline std::vector<Point3> grid_receivers(const GridSpec& g) {
    return grid_receivers(g.origin, g.rows, g.cols, g.spacing, g.height);
}

struct Scene {
    Point3 tx{0.0, 0.0, 20.0};
    std::vector<Point3> receivers;
    std::vector<Scatterer> scatterers;
    double frequency_hz = 3.5e9;
    /// Set when receivers came from a grid; preserved on save.
    std::optional<GridSpec> grid;

    const Scatterer* find(int id) const {
        for (const auto& s : scatterers) {
            if (s.id() == id) return &s;
        }
        return nullptr;
    }

    friend bool operator==(const Scene&, const Scene&) = default;
};

/// Non-fatal findings from validate_scene.
struct SceneReport {
    std::vector<std::string> warnings;
};

/// Throws ValidationError on hard violations; returns soft warnings
/// (e.g. transmitter inside a scatterer).
inline SceneReport validate_scene(const Scene& scene) {
    SceneReport report;
    if (!(scene.frequency_hz > 0.0) || !std::isfinite(scene.frequency_hz)) {
        throw ValidationError("frequency_hz must be positive and finite");
    }
    if (!is_finite(scene.tx)) throw ValidationError("tx position must be finite");
    for (const auto& r : scene.receivers) {
        if (!is_finite(r)) throw ValidationError("receiver position must be finite");
    }
    std::set<int> ids;
    for (const auto& s : scene.scatterers) {
        if (!ids.insert(s.id()).second) {
            throw ValidationError("duplicate scatterer id " + std::to_string(s.id()));
        }
        if (s.contains(scene.tx)) {
            report.warnings.push_back("tx lies inside scatterer " + std::to_string(s.id()));
        }
    }
    return report;
}

struct BooleanModelParams {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 100.0;
    double y_max = 100.0;
    /// Scatterers per square meter.
    double density = 1e-3;
    double length_min = 10.0;
    double length_max = 30.0;
    double height_min = 3.0;
    double height_max = 9.0;
    std::uint64_t seed = 1;
    Point3 tx{0.0, 0.0, 20.0};
    double frequency_hz = 3.5e9;
    std::optional<GridSpec> grid;
};

/// Line Boolean model: Poisson germs over the region, diagonal lengths
/// uniform on [length_min, length_max]. Height is drawn independently and the
/// remaining diagonal is spread over a square footprint.
inline Scene generate_scene(const BooleanModelParams& p) {
    if (!(p.x_max > p.x_min && p.y_max > p.y_min)) {
        throw ValidationError("generation region is empty");
    }
    if (!(p.density > 0.0)) throw ValidationError("density must be positive");
    if (!(p.length_min > 0.0 && p.length_min <= p.length_max)) {
        throw ValidationError("diagonal length range must satisfy 0 < L_min <= L_max");
    }
    if (!(p.height_min > 0.0 && p.height_min <= p.height_max && p.height_max < p.length_min)) {
        throw ValidationError("height range must satisfy 0 < h_min <= h_max < L_min");
    }

    Rng rng = substream(p.seed, "scene");
    const double area = (p.x_max - p.x_min) * (p.y_max - p.y_min);
    std::poisson_distribution<long> count_dist(p.density * area);
    const long count = count_dist(rng);

    Scene scene;
    scene.tx = p.tx;
    scene.frequency_hz = p.frequency_hz;
    scene.scatterers.reserve(static_cast<std::size_t>(count));
    for (long i = 0; i < count; ++i) {
        const double cx = uniform(rng, p.x_min, p.x_max);
        const double cy = uniform(rng, p.y_min, p.y_max);
        const double len = p.length_min == p.length_max ? p.length_min
                                                         : uniform(rng, p.length_min, p.length_max);
        const double h = p.height_min == p.height_max ? p.height_min
                                                      : uniform(rng, p.height_min, p.height_max);
        const double side = std::sqrt((len * len - h * h) / 2.0);
        scene.scatterers.emplace_back(static_cast<int>(i + 1),
                                      Point3{cx - side / 2, cy - side / 2, 0.0},
                                      Point3{cx + side / 2, cy + side / 2, h});
    }
    if (p.grid) {
        scene.grid = p.grid;
        scene.receivers = grid_receivers(*p.grid);
    }
    return scene;
}

// ---------------------------------------------------------------------------
// JSON encoding
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json point_to_json(const Point3& p) { return {{"x", p.x}, {"y", p.y}, {"z", p.z}}; }

inline Point3 point_from_json(const nlohmann::json& j) {
    return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>()};
}

}  // namespace detail

inline nlohmann::json scene_to_json(const Scene& scene) {
    nlohmann::json j;
    j["frequency_hz"] = scene.frequency_hz;
    j["tx"] = detail::point_to_json(scene.tx);
    if (scene.grid) {
        const auto& g = *scene.grid;
        j["grid"] = {{"origin", detail::point_to_json(g.origin)},
                     {"rows", g.rows},
                     {"cols", g.cols},
                     {"spacing", g.spacing},
                     {"height", g.height}};
    } else {
        auto& rx = j["receivers"] = nlohmann::json::array();
        for (const auto& r : scene.receivers) rx.push_back(detail::point_to_json(r));
    }
    auto& sc = j["scatterers"] = nlohmann::json::array();
    for (const auto& s : scene.scatterers) {
        sc.push_back({{"id", s.id()},
                      {"min", detail::point_to_json(s.p_min())},
                      {"max", detail::point_to_json(s.p_max())}});
    }
    return j;
}

inline Scene scene_from_json(const nlohmann::json& j) {
    Scene scene;
    try {
        scene.frequency_hz = j.at("frequency_hz").get<double>();
        scene.tx = detail::point_from_json(j.at("tx"));
        if (j.contains("grid")) {
            const auto& g = j.at("grid");
            GridSpec spec;
            spec.origin = detail::point_from_json(g.at("origin"));
            spec.rows = g.at("rows").get<int>();
            spec.cols = g.at("cols").get<int>();
            spec.spacing = g.at("spacing").get<double>();
            spec.height = g.at("height").get<double>();
            scene.grid = spec;
            scene.receivers = grid_receivers(spec);
        } else if (j.contains("receivers")) {
            for (const auto& r : j.at("receivers")) scene.receivers.push_back(detail::point_from_json(r));
        }
        if (j.contains("scatterers")) {
            for (const auto& s : j.at("scatterers")) {
                scene.scatterers.emplace_back(s.at("id").get<int>(), detail::point_from_json(s.at("min")),
                                              detail::point_from_json(s.at("max")));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("scene schema: ") + e.what());
    }
    validate_scene(scene);
    return scene;
}

inline Scene parse_scene(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("scene file is not valid JSON: ") + e.what());
    }
    return scene_from_json(j);
}

inline Scene load_scene(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open scene file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scene(buf.str());
}

inline std::string dump_scene(const Scene& scene) { return scene_to_json(scene).dump(2) + "\n"; }

}  // namespace rek
