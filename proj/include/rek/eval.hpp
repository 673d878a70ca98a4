#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rek/error.hpp"
#include "rek/io.hpp"

namespace rek::eval {

/// Weight of the n-th (1-based) strongest real scatterer, in hundredths:
/// 30, 25, 20, 15, 10 for the top five, 0 further down.
inline int rank_weight_hundredths(std::size_t n) { return n >= 1 && n <= 5 ? 35 - 5 * static_cast<int>(n) : 0; }

struct AccuracyReport {
    std::size_t rx_index = 0;
    std::vector<int> selected;
    std::vector<int> real;
    /// Exact score in hundredths (65 means 65 %).
    int score_hundredths = 0;

    double percent() const { return static_cast<double>(score_hundredths); }
    double fraction() const { return score_hundredths / 100.0; }
};

/// Weighted selection accuracy: selected ids earn the rank weight of their
/// position in `real` (strongest first), and -0.10 when absent from it.
/// Integer arithmetic keeps the score exact.
inline AccuracyReport selection_accuracy(std::span<const int> selected, std::span<const int> real,
                                         std::size_t rx_index = 0) {
    std::set<int> seen;
    for (int id : selected) {
        if (!seen.insert(id).second) throw ValidationError("duplicate id " + std::to_string(id) + " in selection");
    }
    AccuracyReport r;
    r.rx_index = rx_index;
    r.selected.assign(selected.begin(), selected.end());
    r.real.assign(real.begin(), real.end());
    for (int id : selected) {
        const auto it = std::find(real.begin(), real.end(), id);
        if (it == real.end()) r.score_hundredths -= 10;
        else r.score_hundredths += rank_weight_hundredths(static_cast<std::size_t>(it - real.begin()) + 1);
    }
    return r;
}

/// Box-plot statistics in dB.
struct SummaryStats {
    double upper_quartile = 0.0;
    double lower_quartile = 0.0;
    double upper_bound = 0.0;
    double lower_bound = 0.0;
    double median = 0.0;
    std::size_t outliers = 0;
};

/// Linear-interpolation quantile of sorted data: position p * (n - 1).
inline double quantile_sorted(std::span<const double> sorted, double p) {
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Quartiles by linear interpolation; whiskers at the most extreme data
/// within 1.5 IQR of the quartiles; everything beyond counts as an outlier.
inline SummaryStats summary_stats(std::span<const double> values) {
    if (values.size() < 4) throw ValidationError("summary statistics need at least four values");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    SummaryStats s;
    s.lower_quartile = quantile_sorted(v, 0.25);
    s.median = quantile_sorted(v, 0.5);
    s.upper_quartile = quantile_sorted(v, 0.75);
    const double iqr = s.upper_quartile - s.lower_quartile;
    const double lo_fence = s.lower_quartile - 1.5 * iqr;
    const double hi_fence = s.upper_quartile + 1.5 * iqr;
    s.lower_bound = s.lower_quartile;
    s.upper_bound = s.upper_quartile;
    for (double x : v) {
        if (x < lo_fence || x > hi_fence) {
            ++s.outliers;
            continue;
        }
        s.lower_bound = std::min(s.lower_bound, x);
        s.upper_bound = std::max(s.upper_bound, x);
    }
    return s;
}

/// Step points (value, fraction of samples <= value), one per distinct value.
inline std::vector<std::pair<double, double>> empirical_cdf(std::span<const double> values) {
    if (values.empty()) throw ValidationError("empirical CDF needs at least one value");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    std::vector<std::pair<double, double>> out;
    const double n = static_cast<double>(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i + 1 < v.size() && v[i + 1] == v[i]) continue;
        out.emplace_back(v[i], static_cast<double>(i + 1) / n);
    }
    return out;
}

inline std::string cdf_csv(const std::vector<std::pair<double, double>>& cdf) {
    std::ostringstream out;
    out << "value,fraction\n";
    for (const auto& [v, f] : cdf) out << format_double(v) << ',' << format_double(f) << '\n';
    return out.str();
}

inline std::string join_ids(const std::vector<int>& ids) {
    std::ostringstream out;
    for (std::size_t i = 0; i < ids.size(); ++i) out << (i ? " " : "") << ids[i];
    return out.str();
}

/// Columns mirror the selection-accuracy table: rx, selected ids, real ids, accuracy.
inline std::string accuracy_csv(const std::vector<AccuracyReport>& reports) {
    std::ostringstream out;
    out << "rx_index,selected,real_by_power,accuracy_percent\n";
    for (const auto& r : reports) {
        out << r.rx_index << ',' << join_ids(r.selected) << ',' << join_ids(r.real) << ',' << r.score_hundredths
            << '\n';
    }
    return out.str();
}

/// Columns mirror the box-plot table: one row per named series.
inline std::string stats_csv(const std::vector<std::pair<std::string, SummaryStats>>& rows) {
    std::ostringstream out;
    out << "series,UQ,LQ,UB,LB,MED,OL\n";
    for (const auto& [name, s] : rows) {
        out << name << ',' << format_double(s.upper_quartile) << ',' << format_double(s.lower_quartile) << ','
            << format_double(s.upper_bound) << ',' << format_double(s.lower_bound) << ',' << format_double(s.median)
            << ',' << s.outliers << '\n';
    }
    return out.str();
}

}  // namespace rek::eval
