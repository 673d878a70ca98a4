#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "rek/geometry.hpp"
#include "rek/rng.hpp"
#include "support/oracles.hpp"

using namespace rek;

namespace {

Scatterer box(double x0, double y0, double z0, double x1, double y1, double z1, int id = 1) {
    return Scatterer(id, {x0, y0, z0}, {x1, y1, z1});
}

Point3 random_point(Rng& rng, double lo, double hi) {
    return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

}  // namespace

TEST(PointSegmentDistance, Examples) {
    EXPECT_DOUBLE_EQ(point_segment_distance({0, 1, 0}, {-1, 0, 0}, {1, 0, 0}), 1.0);
    EXPECT_DOUBLE_EQ(point_segment_distance({2, 0, 0}, {-1, 0, 0}, {1, 0, 0}), 1.0);
    EXPECT_DOUBLE_EQ(point_segment_distance({3, 4, 0}, {0, 0, 0}, {0, 0, 0}), 5.0);
}

TEST(Classify, Examples) {
    KnowledgeCoefficients k;
    // center on the link
    const auto blocker = box(4, -1, -1, 6, 1, 1);  // L = sqrt(12)
    EXPECT_EQ(classify_scatterer(blocker, {0, 0, 0}, {10, 0, 0}, k), ScattererClass::Blockage);
    // L = 2, c_diag = 0.75: blockage below 1, impending in [1, 1.5), open from 1.5
    EXPECT_EQ(classify_by_distance(1.2, 2.0, 0.75), ScattererClass::ImpendingBlockage);
    EXPECT_EQ(classify_by_distance(1.6, 2.0, 0.75), ScattererClass::Open);
    EXPECT_EQ(classify_by_distance(0.0, 2.0, 0.75), ScattererClass::Blockage);
    EXPECT_EQ(classify_by_distance(1.0, 2.0, 0.75), ScattererClass::ImpendingBlockage);
    EXPECT_EQ(classify_by_distance(1.5, 2.0, 0.75), ScattererClass::Open);
}

TEST(Classify, MonotoneInDistance) {
    for (double c : {0.55, 0.75, 1.5}) {
        int prev = 0;
        for (double dis = 0.0; dis < 10.0; dis += 0.01) {
            const int rank = static_cast<int>(classify_by_distance(dis, 4.0, c));
            EXPECT_GE(rank, prev);
            prev = rank;
        }
    }
}

TEST(Ellipsoid, VertexInsideExample) {
    const FocalEllipsoid e({0, 0, 0}, {10, 0, 0});
    EXPECT_NEAR(e.level({5, 0, 4.9}), 0.9604, 1e-12);
    EXPECT_TRUE(e.contains({5, 0, 4.9}));
    EXPECT_NEAR(e.semi_major(), 7.0710678118654755, 1e-12);
}

TEST(Ellipsoid, BoxBeyondMajorAxisExcluded) {
    Scene scene;
    scene.scatterers.push_back(box(5.0 + 7.08, -1, -1, 5.0 + 9.0, 1, 1, 1));
    scene.scatterers.push_back(box(5.0 + 7.0, -1, -1, 5.0 + 9.0, 1, 1, 2));
    const auto ids = effective_scatterers(scene, {0, 0, 0}, {10, 0, 0});
    EXPECT_EQ(ids, std::vector<int>{2});
}

TEST(Ellipsoid, BoxContainingAntennaExcluded) {
    Scene scene;
    scene.scatterers.push_back(box(9, -1, -1, 11, 1, 1, 1));
    scene.scatterers.push_back(box(4, 1, -1, 6, 2, 1, 2));
    EXPECT_EQ(effective_scatterers(scene, {0, 0, 0}, {10, 0, 0}), std::vector<int>{2});
}

TEST(Ellipsoid, FaceIntersectionWithoutVertexInside) {
    // a wide slab poking into the ellipsoid through its face interior only
    Scene scene;
    scene.scatterers.push_back(box(-50, -50, 4.9, 50, 50, 6));
    const FocalEllipsoid e({0, 0, 0}, {10, 0, 0});
    for (const auto& v : scatterer_faces(scene.scatterers[0])[4].vertices) EXPECT_FALSE(e.contains(v));
    EXPECT_EQ(effective_scatterers(scene, {0, 0, 0}, {10, 0, 0}), std::vector<int>{1});
}

TEST(Ellipsoid, AgreesWithBruteForceOnRandomScenes) {
    Rng rng(2024);
    int checked = 0;
    for (int scene_i = 0; scene_i < 20; ++scene_i) {
        const Point3 tx = random_point(rng, -20, 20);
        const Point3 rx = random_point(rng, -20, 20);
        const FocalEllipsoid e(tx, rx);
        for (int b = 0; b < 10; ++b) {
            const Point3 c = random_point(rng, -30, 30);
            const Point3 half{uniform(rng, 0.5, 8), uniform(rng, 0.5, 8), uniform(rng, 0.5, 8)};
            const Scatterer s(b, c - half, c + half);
            const double focal = reference::brute_min_focal_sum(s, tx, rx);
            const double two_a = std::sqrt(2.0) * distance(tx, rx);
            if (std::abs(focal - two_a) < 1e-9 * two_a) continue;
            EXPECT_EQ(e.intersects(s), focal < two_a) << "scene " << scene_i << " box " << b;
            ++checked;
        }
    }
    EXPECT_GT(checked, 150);
}

TEST(Faces, UnitCubeNormals) {
    const auto faces = scatterer_faces(box(0, 0, 0, 1, 1, 1));
    const std::array<Vec3, 6> expected{{{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}}};
    for (int i = 0; i < 6; ++i) EXPECT_EQ(faces[i].normal, expected[i]) << i;
}

TEST(Faces, PlanarOutwardAndUnitNormal) {
    Rng rng(7);
    for (int n = 0; n < 50; ++n) {
        const Point3 lo = random_point(rng, -10, 10);
        const Scatterer s(1, lo, lo + Point3{uniform(rng, 0.1, 5), uniform(rng, 0.1, 5), uniform(rng, 0.1, 5)});
        for (const auto& f : scatterer_faces(s)) {
            EXPECT_NEAR(norm(f.normal), 1.0, 1e-15);
            for (const auto& v : f.vertices) EXPECT_NEAR(dot(v - f.anchor(), f.normal), 0.0, 1e-9);
            EXPECT_GT(dot(f.centroid() - s.center(), f.normal), 0.0);
            EXPECT_NEAR(dot(f.vertices[1] - f.vertices[0], f.normal), 0.0, 1e-12);
            EXPECT_NEAR(dot(f.vertices[2] - f.vertices[0], f.normal), 0.0, 1e-12);
        }
    }
}

TEST(FaceDistanceSum, Examples) {
    const auto top = scatterer_faces(box(0, 0, -1, 1, 1, 0))[5];  // unit square at z = 0
    const Point3 p{0.5, 0.5, 1.0};
    EXPECT_NEAR(face_distance_sum(top, p, p), 8.0 * std::sqrt(1.5), 1e-12);
    EXPECT_NEAR(face_distance_sum(top, p, p), 9.79796, 1e-5);

    // collapsed query at one vertex
    const Point3 v = top.vertices[0];
    double expected = 0.0;
    for (const auto& w : top.vertices) expected += 2.0 * distance(w, v);
    EXPECT_NEAR(face_distance_sum(top, v, v), expected, 1e-12);

    // translation invariance
    const Vec3 t{3.5, -2.0, 7.25};
    const auto moved = scatterer_faces(box(t.x, t.y, t.z - 1, t.x + 1, t.y + 1, t.z))[5];
    const Point3 tx{0.2, 3.0, 4.0}, rx{-1.0, 0.4, 2.0};
    EXPECT_NEAR(face_distance_sum(top, tx, rx), face_distance_sum(moved, tx + t, rx + t), 1e-12);
}

TEST(MirrorPoint, Examples) {
    const auto ground = scatterer_faces(box(-10, -10, -1, 10, 10, 0))[5];
    EXPECT_EQ(mirror_point({0, 0, 3}, ground), (Point3{0, 0, -3}));
    EXPECT_EQ(mirror_point({2, 5, 0}, ground), (Point3{2, 5, 0}));
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const Point3 p = random_point(rng, -50, 50);
        const Point3 back = mirror_point(mirror_point(p, ground), ground);
        EXPECT_NEAR(distance(back, p), 0.0, 1e-12);
    }
}

TEST(ReflectionPoint, SymmetricGroundLikeFace) {
    // a slab whose top face is the plane z = 0, centered under the link
    const auto s = box(-8, -10, -1, 12, 10, 0);
    const auto g = reflection_point({0, 0, 3}, {4, 0, 3}, s);
    ASSERT_TRUE(g.valid()) << to_string(g.status);
    EXPECT_EQ(g.face_index, 5);
    EXPECT_NEAR(distance(g.point, {2, 0, 0}), 0.0, 1e-12);
    EXPECT_NEAR(g.path_length, 2.0 * std::sqrt(13.0), 1e-12);
}

TEST(ReflectionPoint, InvalidWhenOutsideFace) {
    const auto s = box(-1, -1, -1, 1, 1, 0);
    const auto g = reflection_point({0, 0, 3}, {40, 0, 3}, s);
    EXPECT_FALSE(g.valid());
}

TEST(ReflectionPoint, InvalidWhenAntennasStraddleFace) {
    const auto s = box(0, 0, 0, 1, 1, 1);
    // tx inside the box: no face has both antennas strictly outside it
    const auto g = reflection_point({0.5, 0.5, 0.5}, {0.5, 0.5, 5.0}, s);
    EXPECT_FALSE(g.valid());
}

TEST(ReflectionPoint, LawOfReflectionAndFermatOnRandomInstances) {
    Rng rng(11);
    int valid = 0;
    int attempts = 0;
    while (valid < 100 && attempts < 100000) {
        ++attempts;
        const Point3 lo = random_point(rng, -5, 5);
        const Scatterer s(1, lo, lo + Point3{uniform(rng, 1, 10), uniform(rng, 1, 10), uniform(rng, 1, 10)});
        const Point3 tx = random_point(rng, -20, 20);
        const Point3 rx = random_point(rng, -20, 20);
        if (s.contains(tx) || s.contains(rx)) continue;
        const auto g = reflection_point(tx, rx, s);
        if (!g.valid()) continue;
        ++valid;
        const Vec3& n = g.face.normal;
        const double cos_i = dot(tx - g.point, n) / distance(tx, g.point);
        const double cos_r = dot(rx - g.point, n) / distance(rx, g.point);
        EXPECT_LT(std::abs(cos_i - cos_r), 1e-9);
        EXPECT_LT(std::abs(g.face.signed_distance(g.point)), 1e-9);
        EXPECT_GE(g.path_length, distance(tx, rx) - 1e-12);
        EXPECT_LE(g.path_length, reference::grid_min_reflected_path(g.face, tx, rx, 60) + 1e-6);
    }
    EXPECT_EQ(valid, 100);
}

TEST(ReflectionPoint, TranslationInvariant) {
    const auto s = box(2, 3, 0, 6, 9, 12);
    const Point3 tx{-5, 0, 10}, rx{-3, 14, 1.5};
    const Vec3 t{100, -40, 0};
    const auto a = reflection_point(tx, rx, s);
    const auto b = reflection_point(tx + t, rx + t, Scatterer(1, s.p_min() + t, s.p_max() + t));
    EXPECT_EQ(a.face_index, b.face_index);
    EXPECT_EQ(a.status, b.status);
    EXPECT_NEAR(distance(a.point + t, b.point), 0.0, 1e-9);
    EXPECT_NEAR(a.path_length, b.path_length, 1e-9);
}

TEST(FresnelCenterHeight, Examples) {
    EXPECT_DOUBLE_EQ(fresnel_center_height(5, 5, 13, 2), 5.0);
    EXPECT_DOUBLE_EQ(fresnel_center_height(20, 1.5, 7, 7), 10.75);
    EXPECT_DOUBLE_EQ(fresnel_center_height(20, 1.5, 30, 10), 6.125);
    EXPECT_THROW(fresnel_center_height(20, 1.5, 0, 0), GeometryError);
}
