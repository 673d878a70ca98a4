#pragma once

#include <array>

#include "rek/scene.hpp"

namespace rek {

/// Desk-scale street canyon: a 30 m wide road running along +y with a
/// 61 x 120 receiver grid (0.5 m spacing, 1.5 m high) on it, building rows on
/// both roadsides and a 20 m transmitter at 3.5 GHz behind the left row's open
/// corner. Receivers near the grid origin see the transmitter across the
/// corner; further up the road the left row cuts the line of sight.
inline Scene canonical_canyon_scene() {
    Scene scene;
    scene.frequency_hz = 3.5e9;
    scene.tx = {-25.0, -30.0, 20.0};
    GridSpec grid;
    grid.origin = {0.0, 0.0, 0.0};
    grid.rows = 120;
    grid.cols = 61;
    grid.spacing = 0.5;
    grid.height = 1.5;
    scene.grid = grid;
    scene.receivers = grid_receivers(grid);

    int id = 1;
    auto add = [&](double x0, double y0, double x1, double y1, double h) {
        scene.scatterers.emplace_back(id++, Point3{x0, y0, 0.0}, Point3{x1, y1, h});
    };

    // left roadside, starting past the open corner
    constexpr std::array<double, 6> left_heights{24.0, 18.0, 27.0, 15.0, 22.0, 30.0};
    for (std::size_t i = 0; i < left_heights.size(); ++i) {
        const double y0 = 18.0 + 11.0 * static_cast<double>(i);
        add(-14.0, y0, -4.0, y0 + 8.0, left_heights[i]);
    }
    // right roadside, full length
    constexpr std::array<double, 9> right_heights{12.0, 21.0, 16.0, 26.0, 14.0, 19.0, 28.0, 13.0, 23.0};
    for (std::size_t i = 0; i < right_heights.size(); ++i) {
        const double y0 = -30.0 + 11.0 * static_cast<double>(i);
        add(34.0, y0, 44.0, y0 + 8.0, right_heights[i]);
    }
    // second row behind the right roadside
    constexpr std::array<double, 5> back_heights{30.0, 17.0, 25.0, 20.0, 32.0};
    for (std::size_t i = 0; i < back_heights.size(); ++i) {
        const double y0 = -20.0 + 18.0 * static_cast<double>(i);
        add(50.0, y0, 62.0, y0 + 12.0, back_heights[i]);
    }
    // road end
    add(2.0, 66.0, 14.0, 76.0, 10.0);
    add(17.0, 68.0, 28.0, 78.0, 16.0);
    // behind the transmitter side, clear of the corner
    add(-52.0, -8.0, -40.0, 2.0, 14.0);
    add(-50.0, 8.0, -38.0, 20.0, 22.0);
    add(-34.0, 30.0, -22.0, 42.0, 26.0);
    add(-34.0, 50.0, -22.0, 62.0, 12.0);
    // kiosks on the open corner, low enough to clear the transmitter
    add(-12.0, -6.0, -8.0, -2.0, 4.0);
    add(-18.0, 6.0, -14.0, 10.0, 5.0);
    return scene;
}

}  // namespace rek
