#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "mrmf/errors.hpp"
#include "mrmf/metrics.hpp"

namespace mrmf {

struct PhaseTotals {
    std::size_t stage = 0;
    Phase phase = Phase::finetune;
    std::size_t epochs = 0;
    double total_seconds = 0.0;
    double final_train_loss = 0.0;
    double final_val_loss = 0.0;
};

inline constexpr const char* kPhaseTotalsHeader =
    "stage,phase,epochs,total_seconds,final_train_loss,final_val_loss";

// Groups records by (stage, phase) in order of first appearance.
inline std::vector<PhaseTotals> aggregate_phases(const std::vector<MetricsRecord>& records) {
    std::vector<PhaseTotals> totals;
    for (const MetricsRecord& r : records) {
        auto it = std::find_if(totals.begin(), totals.end(), [&](const PhaseTotals& t) {
            return t.stage == r.stage && t.phase == r.phase;
        });
        if (it == totals.end()) {
            totals.push_back(PhaseTotals{r.stage, r.phase, 0, 0.0, 0.0, 0.0});
            it = totals.end() - 1;
        }
        it->epochs += 1;
        it->total_seconds += r.epoch_seconds;
        it->final_train_loss = r.train_loss;
        it->final_val_loss = r.val_loss;
    }
    return totals;
}

inline void write_phase_totals_csv(const std::vector<PhaseTotals>& totals,
                                   const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError(DataErrorKind::io, "cannot open for writing: " + path);
    out << kPhaseTotalsHeader << '\n';
    for (const PhaseTotals& t : totals) {
        out << t.stage << ',' << phase_name(t.phase) << ',' << t.epochs << ','
            << format_double(t.total_seconds) << ',' << format_double(t.final_train_loss) << ','
            << format_double(t.final_val_loss) << '\n';
    }
    out.flush();
    if (!out) throw DataError(DataErrorKind::io, "write failed: " + path);
}

namespace report_detail {

struct Curve {
    std::size_t stage;
    Phase phase;
    std::vector<std::pair<double, double>> points;  // (global epoch index, val loss)
};

inline const char* curve_color(std::size_t i) {
    static constexpr const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                              "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    return palette[i % (sizeof(palette) / sizeof(palette[0]))];
}

}  // namespace report_detail

// Renders validation loss against the cumulative epoch index, one polyline per
// (stage, phase). Output is byte-deterministic for identical inputs.
inline void write_loss_svg(const std::vector<MetricsRecord>& records, const std::string& path) {
    using report_detail::Curve;
    if (records.empty()) throw DataError(DataErrorKind::invalid, "no metrics records to plot");

    std::vector<Curve> curves;
    double lo = records[0].val_loss;
    double hi = records[0].val_loss;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const MetricsRecord& r = records[i];
        if (!std::isfinite(r.val_loss))
            throw DataError(DataErrorKind::invalid, "non-finite validation loss in metrics");
        auto it = std::find_if(curves.begin(), curves.end(), [&](const Curve& c) {
            return c.stage == r.stage && c.phase == r.phase;
        });
        if (it == curves.end()) {
            curves.push_back(Curve{r.stage, r.phase, {}});
            it = curves.end() - 1;
        }
        it->points.emplace_back(static_cast<double>(i + 1), r.val_loss);
        lo = std::min(lo, r.val_loss);
        hi = std::max(hi, r.val_loss);
    }
    if (hi == lo) hi = lo + 1.0;

    constexpr double width = 860.0, height = 420.0;
    constexpr double ml = 70.0, mr = 160.0, mt = 20.0, mb = 40.0;
    const double px = width - ml - mr, py = height - mt - mb;
    const double xmax = static_cast<double>(records.size());
    auto sx = [&](double e) { return ml + (xmax <= 1.0 ? 0.0 : (e - 1.0) / (xmax - 1.0) * px); };
    auto sy = [&](double v) { return mt + (hi - v) / (hi - lo) * py; };

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError(DataErrorKind::io, "cannot open for writing: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"860\" height=\"420\" "
           "viewBox=\"0 0 860 420\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"860\" height=\"420\" fill=\"white\"/>\n";
    out << "<line x1=\"" << format_double(ml) << "\" y1=\"" << format_double(mt) << "\" x2=\""
        << format_double(ml) << "\" y2=\"" << format_double(mt + py)
        << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    out << "<line x1=\"" << format_double(ml) << "\" y1=\"" << format_double(mt + py)
        << "\" x2=\"" << format_double(ml + px) << "\" y2=\"" << format_double(mt + py)
        << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    out << "<text x=\"8\" y=\"" << format_double(mt + 6) << "\" font-size=\"12\">"
        << format_double(hi) << "</text>\n";
    out << "<text x=\"8\" y=\"" << format_double(mt + py) << "\" font-size=\"12\">"
        << format_double(lo) << "</text>\n";
    out << "<text x=\"" << format_double(ml + px / 2 - 20) << "\" y=\""
        << format_double(height - 10) << "\" font-size=\"12\">epoch</text>\n";

    for (std::size_t c = 0; c < curves.size(); ++c) {
        const Curve& curve = curves[c];
        out << "<polyline fill=\"none\" stroke=\"" << report_detail::curve_color(c)
            << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t p = 0; p < curve.points.size(); ++p) {
            if (p) out << ' ';
            out << format_double(sx(curve.points[p].first)) << ','
                << format_double(sy(curve.points[p].second));
        }
        out << "\"/>\n";
        const double ly = mt + 16.0 * static_cast<double>(c + 1);
        out << "<line x1=\"" << format_double(ml + px + 10) << "\" y1=\"" << format_double(ly - 4)
            << "\" x2=\"" << format_double(ml + px + 30) << "\" y2=\"" << format_double(ly - 4)
            << "\" stroke=\"" << report_detail::curve_color(c) << "\" stroke-width=\"1.5\"/>\n";
        out << "<text x=\"" << format_double(ml + px + 36) << "\" y=\"" << format_double(ly)
            << "\" font-size=\"12\">stage " << curve.stage << ' ' << phase_name(curve.phase)
            << "</text>\n";
    }
    out << "</svg>\n";
    out.flush();
    if (!out) throw DataError(DataErrorKind::io, "write failed: " + path);
}

inline std::string make_report(const std::string& metrics_path, const std::string& out_prefix) {
    const std::vector<MetricsRecord> records = read_metrics_csv(metrics_path);
    if (records.empty())
        throw DataError(DataErrorKind::invalid, "metrics file has no records: " + metrics_path);
    write_phase_totals_csv(aggregate_phases(records), out_prefix + "_phases.csv");
    write_loss_svg(records, out_prefix + "_loss.svg");

    double total = 0.0;
    for (const MetricsRecord& r : records) total += r.epoch_seconds;
    return "records=" + std::to_string(records.size()) +
           " phases=" + std::to_string(aggregate_phases(records).size()) +
           " total_seconds=" + format_double(total);
}

}  // namespace mrmf
