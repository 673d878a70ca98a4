#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "rek/error.hpp"
#include "rek/knowledge.hpp"
#include "rek/scene.hpp"
#include "rek/vec3.hpp"

namespace rek {

enum class ScattererClass { Blockage, ImpendingBlockage, Open };

inline const char* to_string(ScattererClass c) {
    switch (c) {
        case ScattererClass::Blockage: return "blockage";
        case ScattererClass::ImpendingBlockage: return "impending";
        case ScattererClass::Open: return "open";
    }
    return "?";
}

/// Distance from p to the closed segment [a, b].
inline double point_segment_distance(const Point3& p, const Point3& a, const Point3& b) {
    const Vec3 ab = b - a;
    const double len2 = dot(ab, ab);
    if (len2 == 0.0) return distance(p, a);
    const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
    return distance(p, a + ab * t);
}

/// Blockage when the center is closer to the link than half the diagonal;
/// impending blockage up to c_diag times the diagonal; open beyond that.
inline ScattererClass classify_by_distance(double dis, double diagonal, double c_diag) {
    if (dis < diagonal / 2.0) return ScattererClass::Blockage;
    if (dis < c_diag * diagonal) return ScattererClass::ImpendingBlockage;
    return ScattererClass::Open;
}

inline ScattererClass classify_scatterer(const Scatterer& s, const Point3& tx, const Point3& rx,
                                         const KnowledgeCoefficients& coeffs) {
    return classify_by_distance(point_segment_distance(s.center(), tx, rx), s.diagonal_length(),
                                coeffs.c_diag);
}

// ---------------------------------------------------------------------------
// Focal ellipsoid
// ---------------------------------------------------------------------------

namespace detail {

// Solves the n x n system a * x = b in place (n <= 3, a symmetric positive definite).
inline void solve_small(std::array<std::array<double, 3>, 3> a, std::array<double, 3>& b, int n) {
    for (int k = 0; k < n; ++k) {
        int piv = k;
        for (int i = k + 1; i < n; ++i) {
            if (std::abs(a[i][k]) > std::abs(a[piv][k])) piv = i;
        }
        std::swap(a[k], a[piv]);
        std::swap(b[k], b[piv]);
        for (int i = k + 1; i < n; ++i) {
            const double f = a[i][k] / a[k][k];
            for (int j = k; j < n; ++j) a[i][j] -= f * a[k][j];
            b[i] -= f * b[k];
        }
    }
    for (int k = n - 1; k >= 0; --k) {
        double s = b[k];
        for (int j = k + 1; j < n; ++j) s -= a[k][j] * b[j];
        b[k] = s / a[k][k];
    }
}

}  // namespace detail

/// Link-aligned spheroid with foci tx and rx, semi-axes a = d/sqrt(2) along
/// the link and b = c = d/2 across it. In the frame centered at the focal
/// midpoint, a point is inside when (2x^2 + 4y^2 + 4z^2) / d^2 < 1.
class FocalEllipsoid {
public:
    FocalEllipsoid(const Point3& tx, const Point3& rx)
        : center_((tx + rx) * 0.5), focal_distance_(distance(tx, rx)) {
        if (!(focal_distance_ > 0.0)) throw GeometryError("ellipsoid foci coincide");
        axis_ = (rx - tx) / focal_distance_;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                form_[i][j] = (i == j ? 4.0 : 0.0) - 2.0 * axis_[i] * axis_[j];
            }
        }
    }

    double focal_distance() const { return focal_distance_; }
    double semi_major() const { return focal_distance_ / std::sqrt(2.0); }
    double semi_minor() const { return focal_distance_ / 2.0; }
    const Point3& center() const { return center_; }

    /// Normalized quadratic form; < 1 inside, == 1 on the surface.
    double level(const Point3& p) const { return unscaled(p - center_) / (focal_distance_ * focal_distance_); }

    bool contains(const Point3& p) const { return level(p) < 1.0; }

    /// Minimum of the normalized quadratic form over a closed box. Exact up to
    /// rounding: the minimizer of a strictly convex quadratic over a box is the
    /// restricted minimizer on one of its 27 faces (including the interior).
    double min_level(const Point3& lo, const Point3& hi) const {
        const Vec3 rlo = lo - center_;
        const Vec3 rhi = hi - center_;
        double best = std::numeric_limits<double>::infinity();
        for (int code = 0; code < 27; ++code) {
            // state per axis: 0 free, 1 at lower bound, 2 at upper bound
            std::array<int, 3> state{code % 3, (code / 3) % 3, code / 9};
            Vec3 r;
            std::array<int, 3> free_axes{};
            int nfree = 0;
            for (int k = 0; k < 3; ++k) {
                if (state[k] == 0) free_axes[nfree++] = k;
                else r[k] = state[k] == 1 ? rlo[k] : rhi[k];
            }
            if (nfree > 0) {
                std::array<std::array<double, 3>, 3> a{};
                std::array<double, 3> b{};
                for (int i = 0; i < nfree; ++i) {
                    const int fi = free_axes[i];
                    double rhs = 0.0;
                    for (int k = 0; k < 3; ++k) {
                        if (state[k] != 0) rhs -= form_[fi][k] * r[k];
                    }
                    b[i] = rhs;
                    for (int j = 0; j < nfree; ++j) a[i][j] = form_[fi][free_axes[j]];
                }
                detail::solve_small(a, b, nfree);
                for (int i = 0; i < nfree; ++i) {
                    const int fi = free_axes[i];
                    r[fi] = std::clamp(b[i], rlo[fi], rhi[fi]);
                }
            }
            best = std::min(best, unscaled(r));
        }
        return best / (focal_distance_ * focal_distance_);
    }

    bool intersects(const Scatterer& s) const { return min_level(s.p_min(), s.p_max()) < 1.0; }

private:
    double unscaled(const Vec3& r) const {
        double q = 0.0;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) q += r[i] * form_[i][j] * r[j];
        }
        return q;
    }

    Point3 center_;
    double focal_distance_;
    Vec3 axis_;
    std::array<std::array<double, 3>, 3> form_{};
};

/// Ids (ascending) of scatterers that reach into the focal ellipsoid of the
/// link. Boxes housing either antenna are excluded.
inline std::vector<int> effective_scatterers(const Scene& scene, const Point3& tx, const Point3& rx) {
    const FocalEllipsoid ellipsoid(tx, rx);
    std::vector<int> ids;
    for (const auto& s : scene.scatterers) {
        if (s.contains(tx) || s.contains(rx)) continue;
        if (ellipsoid.intersects(s)) ids.push_back(s.id());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

// ---------------------------------------------------------------------------
// Faces and the image method
// ---------------------------------------------------------------------------

/// One rectangular side of a scatterer box.
struct Face {
    /// Lexicographic over the two in-plane axes: (lo,lo), (lo,hi), (hi,lo), (hi,hi).
    std::array<Point3, 4> vertices;
    /// Outward unit normal.
    Vec3 normal;
    /// Axis the normal points along (0 = x, 1 = y, 2 = z).
    int axis = 0;

    const Point3& anchor() const { return vertices[0]; }

    /// Signed distance of p from the face plane, positive on the outward side.
    double signed_distance(const Point3& p) const { return dot(p - anchor(), normal); }

    /// True when p (assumed on the plane) lies within the rectangle, with tolerance tol.
    bool contains_in_plane(const Point3& p, double tol = 1e-9) const {
        for (int k = 0; k < 3; ++k) {
            if (k == axis) continue;
            const double lo = std::min(vertices[0][k], vertices[3][k]);
            const double hi = std::max(vertices[0][k], vertices[3][k]);
            if (p[k] < lo - tol || p[k] > hi + tol) return false;
        }
        return true;
    }

    Point3 centroid() const {
        return (vertices[0] + vertices[1] + vertices[2] + vertices[3]) * 0.25;
    }
};

/// Six faces ordered -x, +x, -y, +y, -z, +z.
inline std::array<Face, 6> scatterer_faces(const Scatterer& s) {
    std::array<Face, 6> faces;
    const Point3 c = s.center();
    int idx = 0;
    for (int axis = 0; axis < 3; ++axis) {
        const int u = axis == 0 ? 1 : 0;
        const int v = axis == 2 ? 1 : 2;
        for (int side = 0; side < 2; ++side) {
            Face f;
            f.axis = axis;
            const double plane = side == 0 ? s.p_min()[axis] : s.p_max()[axis];
            int vi = 0;
            for (int a = 0; a < 2; ++a) {
                for (int b = 0; b < 2; ++b) {
                    Point3 p;
                    p[axis] = plane;
                    p[u] = a == 0 ? s.p_min()[u] : s.p_max()[u];
                    p[v] = b == 0 ? s.p_min()[v] : s.p_max()[v];
                    f.vertices[vi++] = p;
                }
            }
            // two perpendicular in-plane edges give the normal
            Vec3 n = normalized(cross(f.vertices[1] - f.vertices[0], f.vertices[2] - f.vertices[0]));
            if (dot(f.centroid() - c, n) < 0.0) n = -n;
            f.normal = n;
            faces[idx++] = f;
        }
    }
    return faces;
}

/// Sum over the four vertices of the Tx-vertex and vertex-Rx distances.
inline double face_distance_sum(const Face& face, const Point3& tx, const Point3& rx) {
    double sum = 0.0;
    for (const auto& v : face.vertices) sum += distance(v, tx) + distance(rx, v);
    return sum;
}

/// Tx reflected across the face plane.
inline Point3 mirror_point(const Point3& tx, const Face& face) {
    return tx - face.normal * (2.0 * dot(tx - face.anchor(), face.normal));
}

enum class ReflectionStatus { Valid, OppositeSides, ParallelToPlane, OutsideFace };

inline const char* to_string(ReflectionStatus s) {
    switch (s) {
        case ReflectionStatus::Valid: return "valid";
        case ReflectionStatus::OppositeSides: return "tx and rx not both in front of the face";
        case ReflectionStatus::ParallelToPlane: return "image-to-rx segment parallel to face plane";
        case ReflectionStatus::OutsideFace: return "reflection point outside the face rectangle";
    }
    return "?";
}

struct ReflectionGeometry {
    int scatterer_id = 0;
    int face_index = -1;
    Face face;
    Point3 mirror;
    Point3 point;
    double path_length = 0.0;
    ReflectionStatus status = ReflectionStatus::ParallelToPlane;

    bool valid() const { return status == ReflectionStatus::Valid; }
};

/// Image-method reflection point on the face with the smallest vertex distance
/// sum (lowest face index on ties).
inline ReflectionGeometry reflection_point(const Point3& tx, const Point3& rx, const Scatterer& s) {
    const auto faces = scatterer_faces(s);
    int best = 0;
    double best_sum = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 6; ++i) {
        const double d = face_distance_sum(faces[i], tx, rx);
        if (d < best_sum) {
            best_sum = d;
            best = i;
        }
    }

    ReflectionGeometry g;
    g.scatterer_id = s.id();
    g.face_index = best;
    g.face = faces[best];
    g.mirror = mirror_point(tx, g.face);

    const Vec3& n = g.face.normal;
    const Vec3 toward_rx = rx - g.mirror;
    const double denom = dot(toward_rx, n);
    if (std::abs(denom) <= 1e-12 * std::max(1.0, norm(toward_rx))) {
        g.status = ReflectionStatus::ParallelToPlane;
        g.point = g.mirror;
        g.path_length = distance(tx, rx);
        return g;
    }
    g.point = g.mirror + toward_rx * (dot(g.face.anchor() - g.mirror, n) / denom);
    // snap the normal coordinate onto the plane exactly
    g.point[g.face.axis] = g.face.anchor()[g.face.axis];
    g.path_length = distance(tx, g.point) + distance(g.point, rx);

    if (!(g.face.signed_distance(tx) > 0.0 && g.face.signed_distance(rx) > 0.0)) {
        g.status = ReflectionStatus::OppositeSides;
    } else if (!g.face.contains_in_plane(g.point)) {
        g.status = ReflectionStatus::OutsideFace;
    } else {
        g.status = ReflectionStatus::Valid;
    }
    return g;
}

/// Height of the Fresnel-zone center line above an obstacle at horizontal
/// distances d_t (from Tx) and d_r (from Rx).
inline double fresnel_center_height(double h_t, double h_r, double d_t, double d_r) {
    if (!(d_t + d_r > 0.0)) throw GeometryError("obstacle coincides with both antennas (d_t + d_r = 0)");
    return h_r + (h_t - h_r) * d_r / (d_t + d_r);
}

}  // namespace rek
