#pragma once

// Trajectory CSV: header `iter,loss,rank_product,rank_w1,...,rank_wH`, one
// row per recorded iteration, '\n' line endings, no quoting. Losses are
// printed with 17 significant digits so rows round-trip exactly.

#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>

#include "ranktrace/trainer.hpp"

namespace ranktrace {

inline std::string trajectory_csv_header(std::size_t depth) {
    std::string h = "iter,loss,rank_product";
    for (std::size_t i = 1; i <= depth; ++i) {
        h += ",rank_w" + std::to_string(i);
    }
    return h + "\n";
}

inline std::string trajectory_csv_row(const RankRecord& rec, std::size_t depth) {
    char loss[40];
    std::snprintf(loss, sizeof loss, "%.17g", rec.loss);
    std::string row = std::to_string(rec.iteration) + "," + loss + "," + std::to_string(rec.rank_product);
    for (std::size_t i = 0; i < depth; ++i) {
        row += ",";
        row += i < rec.layer_ranks.size() ? std::to_string(rec.layer_ranks[i]) : "";
    }
    return row + "\n";
}

inline std::string trajectory_csv(const RankTrajectory& traj, std::size_t depth) {
    std::string out = trajectory_csv_header(depth);
    for (const auto& rec : traj.records) {
        out += trajectory_csv_row(rec, depth);
    }
    return out;
}

/// Companion gnuplot script plotting product and layer ranks against iteration.
inline std::string gnuplot_script(const std::string& csv_name, std::size_t depth, const std::string& title) {
    std::ostringstream os;
    os << "set datafile separator ','\n"
       << "set key autotitle columnhead\n"
       << "set title '" << title << "'\n"
       << "set xlabel 'iteration'\nset ylabel 'rank'\n"
       << "plot '" << csv_name << "' using 1:3 with lines lw 2";
    for (std::size_t i = 0; i < depth; ++i) {
        os << ", '' using 1:" << (4 + i) << " with lines";
    }
    os << "\n";
    return os.str();
}

} // namespace ranktrace
