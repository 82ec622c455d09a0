#include "ilcast/variance.hpp"

#include "ilcast/error.hpp"

#include <algorithm>
#include <fstream>

namespace ilcast {

VarianceReport decompose(const Panel& panel, const std::string& name, double threshold) {
    const auto& values = panel.covariate(name);
    VarianceReport rep;
    rep.covariate = name;

    // Two passes: grand and country means, then squared deviations.
    double grand_sum = 0;
    std::vector<std::pair<double, long>> country_stats;
    const auto blocks = panel.country_blocks();
    for (auto [b, e] : blocks) {
        double s = 0;
        long n = 0;
        for (auto i = b; i < e; ++i)
            if (values[i]) {
                s += *values[i];
                ++n;
            }
        country_stats.emplace_back(s, n);
        grand_sum += s;
        rep.n_obs += n;
    }
    if (rep.n_obs == 0) throw DataError("decompose: all values of '" + name + "' are missing");
    const double grand_mean = grand_sum / static_cast<double>(rep.n_obs);

    for (std::size_t c = 0; c < blocks.size(); ++c) {
        const auto [s, n] = country_stats[c];
        if (n == 0) continue;
        const double cmean = s / static_cast<double>(n);
        for (auto i = blocks[c].first; i < blocks[c].second; ++i) {
            if (!values[i]) continue;
            const double x = *values[i];
            rep.ss_total += (x - grand_mean) * (x - grand_mean);
            rep.ss_within += (x - cmean) * (x - cmean);
        }
        rep.ss_between += static_cast<double>(n) * (cmean - grand_mean) * (cmean - grand_mean);
    }
    if (rep.n_obs < 2 || !(rep.ss_total > 0))
        throw DataError("decompose: '" + name + "' has zero total variation; classification undefined");
    rep.between_fraction = std::clamp(rep.ss_between / rep.ss_total, 0.0, 1.0);
    rep.classification = rep.between_fraction > threshold ? VarianceClass::Static : VarianceClass::Dynamic;
    return rep;
}

std::vector<VarianceReport> decompose_all(const Panel& panel, const std::vector<std::string>& names,
                                          double threshold) {
    std::vector<VarianceReport> out;
    out.reserve(names.size());
    for (const auto& n : names) out.push_back(decompose(panel, n, threshold));
    std::stable_sort(out.begin(), out.end(), [](const VarianceReport& a, const VarianceReport& b) {
        if (a.between_fraction != b.between_fraction) return a.between_fraction > b.between_fraction;
        return a.covariate < b.covariate;
    });
    return out;
}

std::string to_string(VarianceClass c) { return c == VarianceClass::Static ? "static" : "dynamic"; }

void write_variance_csv(const std::string& path, const std::vector<VarianceReport>& reports) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    csv::write_row(out, {"covariate", "n_obs", "ss_total", "ss_between", "ss_within",
                         "between_fraction", "classification"});
    for (const auto& r : reports)
        csv::write_row(out, {r.covariate, std::to_string(r.n_obs), csv::format_double(r.ss_total),
                             csv::format_double(r.ss_between), csv::format_double(r.ss_within),
                             csv::format_double(r.between_fraction), to_string(r.classification)});
}

void write_variance_points(const std::string& path, const std::vector<VarianceReport>& reports) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    csv::write_row(out, {"covariate", "x", "y"});
    for (const auto& r : reports)
        csv::write_row(out, {r.covariate, csv::format_double(r.ss_total),
                             csv::format_double(r.between_fraction)});
}

} // namespace ilcast
