#include "ilcast/synthetic.hpp"

#include "ilcast/csv.hpp"
#include "ilcast/error.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>

namespace ilcast::synthetic {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Country {
    int id;
    const char* name;
    double lat;
    double lon;
    int polity;
    double gdp;          // log GDP per capita level
    double protest_rate; // mean monthly DIS->GOV material conflict events
    int last_month;      // months observed (state exit when below the panel length)
};

// Fictional countries; one leaves the panel early to exercise state exits.
const Country kCountries[] = {
    {1, "Arland", 48.0, 10.0, 8, 10.1, 1.0, 60},    {2, "Borovia", 50.5, 17.0, -6, 8.2, 6.0, 60},
    {3, "Calvera", 42.0, 21.0, -2, 8.8, 4.0, 60},   {4, "Durnia", 45.5, 26.0, -8, 7.6, 9.0, 60},
    {5, "Estovan", 39.0, 33.0, 3, 9.4, 2.5, 60},    {6, "Ferania", 36.0, 28.0, -9, 7.3, 7.0, 54},
};

// Data-generating parameters of the duration process.
constexpr double kBeta0 = 2.8;
constexpr double kBetaProtest = -1.2;
constexpr double kGamma0 = 0.4;
constexpr double kGammaPolity = -0.35;
constexpr double kAlpha = 0.8;

struct Draw {
    std::vector<std::vector<std::string>> panel;
    std::vector<std::vector<std::string>> history;
    std::vector<std::vector<std::string>> events;
    DatasetSummary summary;
};

Draw simulate(const DatasetOptions& o, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> norm(0.0, 1.0);
    Draw d;
    d.summary.seed_used = seed;

    for (const auto& c : kCountries) {
        // Seed the spell with a pre-panel failure for most countries.
        long last_failure = -1;
        if (unif(rng) < 0.7) {
            const long span = o.first_month - o.backfill_start;
            last_failure = o.backfill_start.index() + static_cast<long>(unif(rng) * static_cast<double>(span - 1));
            const auto m = YearMonth::from_index(last_failure);
            d.history.push_back({std::to_string(c.id), std::to_string(m.year), std::to_string(m.month), "1"});
        }
        const double r = logistic(kGamma0 + kGammaPolity * c.polity);
        bool at_risk = unif(rng) < r;
        double protest_prev = -1;
        for (int k = 0; k < c.last_month; ++k) {
            const YearMonth m = o.first_month + k;
            // Protest intensity drifts around the country rate.
            const double rate = c.protest_rate * std::exp(0.5 * std::sin(0.3 * k + c.id) + 0.2 * norm(rng));
            std::poisson_distribution<long> pois(rate);
            const long protests = pois(rng);
            const long threats = std::poisson_distribution<long>(0.6 * rate)(rng);
            const long coop = std::poisson_distribution<long>(3.0)(rng);
            const long other = std::poisson_distribution<long>(1.0)(rng);
            const std::string cid = std::to_string(c.id), y = std::to_string(m.year), mo = std::to_string(m.month);
            auto add_events = [&](long count, const char* src, const char* tgt, int root_lo, int root_hi) {
                if (count == 0) return;
                std::uniform_int_distribution<int> roots(root_lo, root_hi);
                // Split the month's count over two root codes of the same quad.
                const long first = count / 2;
                if (first > 0) d.events.push_back({cid, y, mo, src, tgt, std::to_string(roots(rng)), std::to_string(first)});
                d.events.push_back({cid, y, mo, src, tgt, std::to_string(roots(rng)), std::to_string(count - first)});
            };
            add_events(protests, "DIS", "GOV", 14, 20);
            add_events(threats, "GOV", "DIS", 9, 13);
            add_events(coop, "GOV", "GOV", 1, 5);
            add_events(other, "OTHER", "GOV", 6, 8);

            const double gdp = c.gdp + 0.004 * k + 0.02 * norm(rng);
            const int polity = c.polity;

            // Duration process driven by the previous month's protests.
            const long start = last_failure >= 0 ? last_failure + 1 : o.backfill_start.index();
            const double duration = static_cast<double>(m.index() - start + 1);
            bool failed = false;
            if (at_risk && protest_prev >= 0) {
                const double lambda = std::exp(-(kBeta0 + kBetaProtest * std::log10(protest_prev + 1.0)));
                const double h0 = std::pow(lambda * (duration - 1.0), kAlpha);
                const double h1 = std::pow(lambda * duration, kAlpha);
                failed = unif(rng) < -std::expm1(-(h1 - h0));
            }
            protest_prev = static_cast<double>(protests);
            int entry = 0, exit = 0;
            if (failed) {
                exit = 1;
                entry = unif(rng) < 0.5 ? 1 : 0;
                last_failure = m.index();
                at_risk = unif(rng) < r;
                d.history.push_back({cid, y, mo, "1"});
                ++d.summary.failures;
                if (m <= o.train_end)
                    ++d.summary.train_failures;
                else if (m <= o.calibration_end)
                    ++d.summary.calibration_failures;
                else if (m <= o.test_end)
                    ++d.summary.test_failures;
            }
            d.panel.push_back({cid, c.name, y, mo, std::to_string(entry), std::to_string(exit),
                               std::to_string(entry | exit), std::to_string(polity), csv::format_double(gdp)});
            ++d.summary.rows;
        }
    }
    return d;
}

void write_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    csv::write_row(out, header);
    for (const auto& r : rows) csv::write_row(out, r);
}

nlohmann::ordered_json default_config(const DatasetOptions& o, std::uint64_t seed) {
    const std::string protest = "i.matl.conf.DIStGOV";
    const std::string log_protest = "log10(" + protest + ".l1+1)";
    nlohmann::ordered_json c;
    c["data"] = {{"panel", "panel.csv"},
                 {"panel_schema", {{"name_column", "name"}}},
                 {"history", "history.csv"},
                 {"events", "events.csv"},
                 {"centroids", "centroids.csv"}};
    c["backfill_start"] = o.backfill_start.to_string();
    c["partitions"] = {{"train_end", o.train_end.to_string()},
                       {"calibration_end", o.calibration_end.to_string()},
                       {"test_end", o.test_end.to_string()}};
    c["transforms"] = nlohmann::ordered_json::array({
        {{"op", "aggregate_events"}, {"source", "DIS"}, {"target", "GOV"}, {"quad", "MaterialConf"}, {"name", protest}},
        {{"op", "lag"}, {"covariate", protest}, {"k", 1}},
        {{"op", "log"}, {"covariate", protest + ".l1"}, {"base", 10}, {"offset", 1}},
        {{"op", "lag"}, {"covariate", "gdp"}, {"k", 1}},
        {{"op", "spatial_lag"}, {"covariate", log_protest}, {"scheme", "knn4"}},
        {{"op", "spatial_lag"}, {"covariate", log_protest}, {"scheme", "gower.pol"},
         {"features", {{"numeric", {"polity"}}, {"categorical", nlohmann::ordered_json::array()}}}},
    });
    c["variance"] = {{"covariates", {"polity", "gdp", protest, log_protest}}, {"threshold", 0.5}};
    c["models"] = nlohmann::ordered_json::array({
        {{"name", "protest"}, {"duration", {log_protest}}, {"risk", {"polity"}}},
        {{"name", "contagion"}, {"duration", {"W.knn4." + log_protest}}, {"risk", {"polity"}}},
        {{"name", "economy"}, {"duration", {"gdp.l1"}}, {"risk", {"polity"}}},
    });
    c["ensemble"] = {{"restarts", 2}};
    c["evaluation"] = {{"beta_f", 1.0}, {"window", 6}};
    c["forecast"] = {{"horizon", 6}, {"top", 6}};
    c["seed"] = seed;
    return c;
}

} // namespace

spdur::ModelFrame draw_sample(const SampleSpec& spec, std::mt19937_64& rng) {
    if (spec.n < 1) throw DataError("sample size must be positive");
    std::normal_distribution<double> norm(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::MatrixXd x(spec.n, 1), z(spec.n, 1);
    Eigen::VectorXd t(spec.n);
    std::vector<int> failure(static_cast<std::size_t>(spec.n));
    std::vector<int> atrisk(static_cast<std::size_t>(spec.n));
    for (long i = 0; i < spec.n; ++i) {
        x(i, 0) = norm(rng);
        z(i, 0) = norm(rng);
        const bool risk = unif(rng) < logistic(spec.gamma0 + spec.gamma1 * z(i, 0));
        // Uniform on (0, censor_max]: 1 - U lies in (0, 1].
        const double censor = spec.censor_max * (1.0 - unif(rng));
        double time = censor;
        int failed = 0;
        if (risk) {
            const double lambda = std::exp(-(spec.beta0 + spec.beta1 * x(i, 0)));
            const double event = std::pow(-std::log(1.0 - unif(rng)), 1.0 / spec.alpha) / lambda;
            if (event <= censor && event > 0) {
                time = event;
                failed = 1;
            }
        }
        t(i) = time;
        failure[static_cast<std::size_t>(i)] = failed;
        atrisk[static_cast<std::size_t>(i)] = risk ? 1 : 0;
    }
    auto frame = spdur::make_frame(x, z, t, std::move(failure), {"x"}, {"z"});
    frame.atrisk = std::move(atrisk);
    return frame;
}

DatasetSummary write_dataset(const std::string& dir, const DatasetOptions& options) {
    if (!(options.first_month + (options.months - 1) >= options.test_end))
        throw DataError("synthetic dataset: test_end lies beyond the generated months");
    Draw d;
    std::uint64_t seed = options.seed;
    for (int attempt = 0;; ++attempt, ++seed) {
        if (attempt == 1000) throw Error("synthetic dataset: no seed met the failure requirements");
        d = simulate(options, seed);
        const auto& s = d.summary;
        if (s.train_failures >= options.min_failures && s.calibration_failures >= options.min_failures &&
            s.test_failures >= options.min_failures)
            break;
    }
    const std::filesystem::path root(dir);
    std::filesystem::create_directories(root);
    write_table(root / "panel.csv",
                {"country_id", "name", "year", "month", "irr_entry", "irr_exit", "ilc", "polity", "gdp"}, d.panel);
    write_table(root / "history.csv", {"country_id", "year", "month", "irr_exit"}, d.history);
    write_table(root / "events.csv",
                {"country_id", "year", "month", "source_sector", "target_sector", "cameo_root", "count"}, d.events);
    std::vector<std::vector<std::string>> centroids;
    for (const auto& c : kCountries)
        centroids.push_back({std::to_string(c.id), csv::format_double(c.lat), csv::format_double(c.lon)});
    write_table(root / "centroids.csv", {"country_id", "lat", "lon"}, centroids);
    std::ofstream cfg(root / "config.json", std::ios::binary);
    if (!cfg) throw DataError("cannot write config.json");
    cfg << default_config(options, d.summary.seed_used).dump(2) << '\n';
    return d.summary;
}

} // namespace ilcast::synthetic
