#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "rek/canonical.hpp"
#include "rek/oracle.hpp"

using namespace rek;
using namespace rek::oracle;

namespace {

Scene link_scene(const Point3& tx, std::vector<Point3> rx) {
    Scene s;
    s.tx = tx;
    s.receivers = std::move(rx);
    return s;
}

double power_sum_db(const std::vector<PropPath>& paths) {
    double lin = 0.0;
    for (const auto& p : paths) lin += std::pow(10.0, p.power_db / 10.0);
    return -10.0 * std::log10(lin);
}

}  // namespace

TEST(FreeSpace, Values) {
    const double f = 3.5e9;
    const double expected = 20.0 * std::log10(4.0 * std::numbers::pi * f / 299792458.0);
    EXPECT_NEAR(free_space_path_loss(1.0, f), expected, 1e-12);
    EXPECT_NEAR(free_space_path_loss(1.0, f), 43.33, 0.01);
    EXPECT_NEAR(free_space_path_loss(2.0, f) - free_space_path_loss(1.0, f), 20.0 * std::log10(2.0), 1e-12);
    EXPECT_NEAR(free_space_path_loss(299792458.0 / (4.0 * std::numbers::pi * f), f), 0.0, 1e-12);
    EXPECT_THROW(free_space_path_loss(0.0, f), GeometryError);
}

TEST(KnifeEdge, Values) {
    EXPECT_NEAR(knife_edge_loss(0.0), 6.9 + 20.0 * std::log10(std::sqrt(1.01) - 0.1), 1e-12);
    EXPECT_NEAR(knife_edge_loss(0.0), 6.0329, 1e-4);
    EXPECT_EQ(knife_edge_loss(-0.78), 0.0);
    EXPECT_EQ(knife_edge_loss(-3.0), 0.0);
    double prev = knife_edge_loss(-0.77);
    for (double v = -0.76; v < 5.0; v += 0.01) {
        const double j = knife_edge_loss(v);
        EXPECT_GT(j, prev);
        prev = j;
    }
}

TEST(SegmentBox, Cases) {
    const Scatterer s(1, {0, 0, 0}, {1, 1, 1});
    EXPECT_TRUE(segment_intersects_box({-1, 0.5, 0.5}, {2, 0.5, 0.5}, s));
    EXPECT_TRUE(segment_intersects_box({-1, -1, -1}, {2, 2, 2}, s));
    // grazing along a face is not an obstruction
    EXPECT_FALSE(segment_intersects_box({-1, 0, 0.5}, {2, 0, 0.5}, s));
    EXPECT_FALSE(segment_intersects_box({-1, 2, 0.5}, {2, 2, 0.5}, s));
    // stops short of the box
    EXPECT_FALSE(segment_intersects_box({-3, 0.5, 0.5}, {-0.1, 0.5, 0.5}, s));
    // ends exactly on the face
    EXPECT_FALSE(segment_intersects_box({-3, 0.5, 0.5}, {0, 0.5, 0.5}, s));
    EXPECT_TRUE(segment_intersects_box({0.5, 0.5, 0.5}, {0.6, 0.5, 0.5}, s));

    Scene scene = link_scene({0, 0, 0}, {});
    scene.scatterers.push_back(s);
    EXPECT_TRUE(segment_blocked(scene, {-1, 0.5, 0.5}, {2, 0.5, 0.5}));
    EXPECT_FALSE(segment_blocked(scene, {-1, 0.5, 0.5}, {2, 0.5, 0.5}, 1));
}

TEST(TracePaths, EmptySceneHasDirectAndGround) {
    const Scene s = link_scene({0, 0, 20}, {{50, 0, 1.5}});
    const auto paths = trace_paths(s, 0);
    ASSERT_EQ(paths.size(), 2u);
    EXPECT_EQ(paths[0].kind, PathKind::Direct);
    EXPECT_EQ(paths[1].kind, PathKind::GroundReflection);
    EXPECT_NEAR(paths[1].length_m, std::hypot(50.0, 21.5), 1e-9);
    EXPECT_LT(paths[1].power_db, paths[0].power_db);
}

TEST(TracePaths, WallAddsWeakerReflection) {
    Scene s = link_scene({0, 0, 10}, {{20, 0, 10}});
    s.scatterers.emplace_back(3, Point3{-10, 5, 0}, Point3{30, 8, 20});
    const auto paths = trace_paths(s, 0);
    ASSERT_EQ(paths.size(), 3u);
    const auto refl = std::find_if(paths.begin(), paths.end(),
                                   [](const auto& p) { return p.kind == PathKind::ScattererReflection; });
    ASSERT_NE(refl, paths.end());
    EXPECT_EQ(refl->scatterer_id, 3);
    EXPECT_NEAR(refl->length_m, 2.0 * std::hypot(10.0, 5.0), 1e-9);
    EXPECT_LT(refl->power_db, paths[0].power_db - 6.0);
}

TEST(TracePaths, BlockedLinkDiffractsOverTheBlocker) {
    Scene s = link_scene({0, 0, 20}, {{40, 0, 1.5}});
    s.scatterers.emplace_back(1, Point3{28, -5, 0}, Point3{32, 5, 30});
    const auto paths = trace_paths(s, 0);
    for (const auto& p : paths) EXPECT_NE(p.kind, PathKind::Direct);
    const auto d = std::find_if(paths.begin(), paths.end(), [](const auto& p) { return p.kind == PathKind::Diffraction; });
    ASSERT_NE(d, paths.end());
    EXPECT_EQ(d->scatterer_id, 1);
    EXPECT_GT(d->excess_loss_db, 6.0);
}

TEST(PathLoss, SinglePathEqualsItsLoss) {
    const Scene s = link_scene({0, 0, 20}, {{30, 40, 20}});
    OracleOptions opt;
    opt.ground_reflection = false;
    EXPECT_NEAR(path_loss(s, 0, opt).path_loss_db, free_space_path_loss(50.0, s.frequency_hz), 1e-12);
}

TEST(PathLoss, IsNonCoherentSum) {
    const Scene scene = canonical_canyon_scene();
    for (std::size_t i = 0; i < scene.receivers.size(); i += 97) {
        const auto sample = path_loss(scene, i);
        ASSERT_FALSE(sample.paths.empty());
        EXPECT_NEAR(sample.path_loss_db, power_sum_db(sample.paths), 1e-9);
        // adding paths can only lower the loss below the strongest one
        double strongest = -1e300;
        for (const auto& p : sample.paths) strongest = std::max(strongest, p.power_db);
        EXPECT_LE(sample.path_loss_db, -strongest + 1e-12);
        EXPECT_GE(sample.path_loss_db, -strongest - 10.0 * std::log10(static_cast<double>(sample.paths.size())) - 1e-9);
    }
}

TEST(PathLoss, TwoEqualPathsGainThreeDecibels) {
    const std::vector<PropPath> paths{{PathKind::Direct, -1, 10, 0, -80}, {PathKind::Direct, -1, 10, 0, -80}};
    EXPECT_NEAR(power_sum_db(paths), 80.0 - 10.0 * std::log10(2.0), 1e-12);
    EXPECT_NEAR(power_sum_db(paths), 76.99, 0.01);
}

TEST(PathLoss, IncreasesWithDistanceInFreeSpace) {
    std::vector<Point3> rx;
    for (int i = 1; i <= 50; ++i) rx.push_back({2.0 * i, 0, 20});
    const Scene s = link_scene({0, 0, 20}, rx);
    OracleOptions opt;
    opt.ground_reflection = false;
    double prev = -1e300;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        const double pl = path_loss(s, i, opt).path_loss_db;
        EXPECT_GT(pl, prev);
        prev = pl;
    }
}

TEST(PathLoss, Deterministic) {
    const Scene scene = canonical_canyon_scene();
    for (std::size_t i = 0; i < scene.receivers.size(); i += 503) {
        const auto a = path_loss(scene, i);
        const auto b = path_loss(scene, i);
        EXPECT_EQ(a.path_loss_db, b.path_loss_db);
        EXPECT_EQ(a.paths, b.paths);
    }
}

TEST(Ranking, DedupAndTruncate) {
    PathLossSample s;
    s.paths = {{PathKind::Direct, -1, 1, 0, -50},
               {PathKind::ScattererReflection, 4, 1, 0, -70},
               {PathKind::ScattererReflection, 9, 1, 0, -60},
               {PathKind::Diffraction, 4, 1, 0, -65},
               {PathKind::ScattererReflection, 2, 1, 0, -90}};
    EXPECT_EQ(rank_scatterers_by_power(s, 10), (std::vector<int>{9, 4, 2}));
    EXPECT_EQ(rank_scatterers_by_power(s, 2), (std::vector<int>{9, 4}));
    EXPECT_TRUE(rank_scatterers_by_power(s, 0).empty());
}

TEST(LabelsCsv, RoundTrip) {
    const Scene scene = canonical_canyon_scene();
    std::vector<PathLossSample> samples;
    for (std::size_t i = 0; i < 50; ++i) samples.push_back(path_loss(scene, i));
    const auto rows = parse_labels_csv(labels_csv(samples));
    ASSERT_EQ(rows.size(), samples.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i].first, samples[i].rx_index);
        EXPECT_EQ(rows[i].second, samples[i].path_loss_db);
    }
    EXPECT_THROW(parse_labels_csv("nope\n"), ParseError);
}
