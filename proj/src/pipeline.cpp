#include "ilcast/pipeline.hpp"

#include "ilcast/csv.hpp"
#include "ilcast/forecast.hpp"
#include "ilcast/variance.hpp"

#include <openssl/evp.h>
#include <openssl/opensslv.h>

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

namespace ilcast::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Hashing

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 computation failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

namespace {

std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

std::string sha256_file(const fs::path& path) { return sha256_hex(read_bytes(path)); }

// ---------------------------------------------------------------------------
// Config parsing

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& context) {
    if (!obj.is_object()) throw ConfigError(context + ": expected an object");
    for (const auto& [key, value] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw ConfigError(context + ": unknown key '" + key + "'");
    }
}

template <class T>
void read(const json& obj, const char* key, T& target, const std::string& context) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
        target = it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(context + "." + key + ": wrong type");
    }
}

YearMonth read_month(const json& obj, const char* key, YearMonth fallback, const std::string& context) {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    if (!it->is_string()) throw ConfigError(context + "." + key + ": expected \"YYYY-MM\"");
    try {
        return YearMonth::parse(it->get<std::string>());
    } catch (const DataError& e) {
        throw ConfigError(context + "." + key + ": " + e.what());
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    fs::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

Transform parse_transform(const json& j, std::size_t index) {
    const std::string ctx = "transforms[" + std::to_string(index) + "]";
    if (!j.is_object() || !j.contains("op")) throw ConfigError(ctx + ": missing 'op'");
    const std::string op = j.at("op").is_string() ? j.at("op").get<std::string>() : "";
    Transform t;
    read(j, "name", t.name, ctx);
    try {
        if (op == "aggregate_events") {
            check_keys(j, {"op", "source", "target", "quad", "name"}, ctx);
            t.kind = Transform::Kind::AggregateEvents;
            std::string src, tgt, quad;
            read(j, "source", src, ctx);
            read(j, "target", tgt, ctx);
            read(j, "quad", quad, ctx);
            t.source = parse_direction_sector(src);
            t.target = parse_direction_sector(tgt);
            t.quad = parse_quad(quad);
        } else if (op == "lag") {
            check_keys(j, {"op", "covariate", "k", "name"}, ctx);
            t.kind = Transform::Kind::Lag;
            read(j, "covariate", t.covariate, ctx);
            read(j, "k", t.k, ctx);
        } else if (op == "log") {
            check_keys(j, {"op", "covariate", "base", "offset", "name"}, ctx);
            t.kind = Transform::Kind::Log;
            read(j, "covariate", t.covariate, ctx);
            read(j, "offset", t.offset, ctx);
            if (j.contains("base")) {
                const auto& b = j.at("base");
                if (b.is_number() && b.get<double>() == 10)
                    t.base = LogBase::Ten;
                else if (b.is_string() && b.get<std::string>() == "e")
                    t.base = LogBase::E;
                else
                    throw ConfigError(ctx + ".base: expected 10 or \"e\"");
            }
        } else if (op == "spatial_lag") {
            check_keys(j, {"op", "covariate", "scheme", "features", "name"}, ctx);
            t.kind = Transform::Kind::SpatialLag;
            read(j, "covariate", t.covariate, ctx);
            std::string scheme;
            read(j, "scheme", scheme, ctx);
            t.scheme = parse_scheme(scheme);
            if (j.contains("features")) {
                const auto& f = j.at("features");
                check_keys(f, {"numeric", "categorical"}, ctx + ".features");
                read(f, "numeric", t.numeric_features, ctx + ".features");
                read(f, "categorical", t.categorical_features, ctx + ".features");
            }
        } else {
            throw ConfigError(ctx + ": unknown op '" + op + "'");
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(ctx + ": " + e.what());
    }
    return t;
}

} // namespace

PipelineConfig parse_config(const std::string& text, const fs::path& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, {"data", "backfill_start", "partitions", "transforms", "variance", "models", "fit", "ensemble",
                   "evaluation", "forecast", "seed"},
               "config");
    PipelineConfig c;
    c.sha256 = sha256_hex(text);

    if (!j.contains("data")) throw ConfigError("config: missing 'data'");
    const auto& d = j.at("data");
    check_keys(d, {"panel", "history", "events", "centroids", "panel_schema", "history_schema", "event_schema"},
               "data");
    std::string panel, history, events, centroids;
    read(d, "panel", panel, "data");
    read(d, "history", history, "data");
    read(d, "events", events, "data");
    read(d, "centroids", centroids, "data");
    if (panel.empty()) throw ConfigError("data.panel is required");
    if (history.empty()) throw ConfigError("data.history is required");
    c.panel = resolve(base_dir, panel);
    c.history = resolve(base_dir, history);
    c.events = resolve(base_dir, events);
    c.centroids = resolve(base_dir, centroids);
    if (d.contains("panel_schema")) {
        const auto& s = d.at("panel_schema");
        const std::string ctx = "data.panel_schema";
        check_keys(s, {"country_column", "name_column", "year_column", "month_column", "date_column", "entry_column",
                       "exit_column", "ilc_column", "covariates"},
                   ctx);
        auto& p = c.panel_schema;
        read(s, "country_column", p.country_column, ctx);
        read(s, "name_column", p.name_column, ctx);
        read(s, "year_column", p.year_column, ctx);
        read(s, "month_column", p.month_column, ctx);
        read(s, "date_column", p.date_column, ctx);
        read(s, "entry_column", p.entry_column, ctx);
        read(s, "exit_column", p.exit_column, ctx);
        read(s, "ilc_column", p.ilc_column, ctx);
        read(s, "covariates", p.covariates, ctx);
    }
    if (d.contains("history_schema")) {
        const auto& s = d.at("history_schema");
        const std::string ctx = "data.history_schema";
        check_keys(s, {"country_column", "year_column", "month_column", "date_column", "flag_column"}, ctx);
        auto& h = c.history_schema;
        read(s, "country_column", h.country_column, ctx);
        read(s, "year_column", h.year_column, ctx);
        read(s, "month_column", h.month_column, ctx);
        read(s, "date_column", h.date_column, ctx);
        read(s, "flag_column", h.flag_column, ctx);
    }
    if (d.contains("event_schema")) {
        const auto& s = d.at("event_schema");
        const std::string ctx = "data.event_schema";
        check_keys(s, {"country_column", "year_column", "month_column", "date_column", "source_column",
                       "target_column", "root_column", "count_column"},
                   ctx);
        auto& e = c.event_schema;
        read(s, "country_column", e.country_column, ctx);
        read(s, "year_column", e.year_column, ctx);
        read(s, "month_column", e.month_column, ctx);
        read(s, "date_column", e.date_column, ctx);
        read(s, "source_column", e.source_column, ctx);
        read(s, "target_column", e.target_column, ctx);
        read(s, "root_column", e.root_column, ctx);
        read(s, "count_column", e.count_column, ctx);
    }

    c.backfill_start = read_month(j, "backfill_start", c.backfill_start, "config");
    if (j.contains("partitions")) {
        const auto& p = j.at("partitions");
        check_keys(p, {"train_end", "calibration_end", "test_end"}, "partitions");
        c.train_end = read_month(p, "train_end", c.train_end, "partitions");
        c.calibration_end = read_month(p, "calibration_end", c.calibration_end, "partitions");
        c.test_end = read_month(p, "test_end", c.test_end, "partitions");
    }
    if (j.contains("transforms")) {
        if (!j.at("transforms").is_array()) throw ConfigError("transforms: expected an array");
        std::size_t i = 0;
        for (const auto& t : j.at("transforms")) c.transforms.push_back(parse_transform(t, i++));
    }
    if (j.contains("variance")) {
        const auto& v = j.at("variance");
        check_keys(v, {"covariates", "threshold"}, "variance");
        read(v, "covariates", c.variance_covariates, "variance");
        read(v, "threshold", c.static_threshold, "variance");
    }
    if (!j.contains("models") || !j.at("models").is_array()) throw ConfigError("config: 'models' must be an array");
    std::size_t mi = 0;
    for (const auto& m : j.at("models")) {
        const std::string ctx = "models[" + std::to_string(mi++) + "]";
        check_keys(m, {"name", "duration", "risk"}, ctx);
        ModelSpec spec;
        read(m, "name", spec.name, ctx);
        read(m, "duration", spec.spec.duration, ctx);
        read(m, "risk", spec.spec.risk, ctx);
        c.models.push_back(std::move(spec));
    }
    if (j.contains("fit")) {
        const auto& f = j.at("fit");
        check_keys(f, {"max_iterations", "gradient_tolerance", "standardize", "hessian_step"}, "fit");
        read(f, "max_iterations", c.fit.max_iterations, "fit");
        read(f, "gradient_tolerance", c.fit.gradient_tolerance, "fit");
        read(f, "standardize", c.fit.standardize, "fit");
        read(f, "hessian_step", c.fit.hessian_step, "fit");
    }
    if (j.contains("ensemble")) {
        const auto& e = j.at("ensemble");
        check_keys(e, {"restarts", "max_iterations", "tolerance", "max_abs_coefficient"}, "ensemble");
        read(e, "restarts", c.em.restarts, "ensemble");
        read(e, "max_iterations", c.em.max_iterations, "ensemble");
        read(e, "tolerance", c.em.tolerance, "ensemble");
        read(e, "max_abs_coefficient", c.calibration.max_abs_coefficient, "ensemble");
    }
    if (j.contains("evaluation")) {
        const auto& e = j.at("evaluation");
        check_keys(e, {"beta_f", "window"}, "evaluation");
        read(e, "beta_f", c.report.beta_f, "evaluation");
        read(e, "window", c.report.window, "evaluation");
    }
    if (j.contains("forecast")) {
        const auto& f = j.at("forecast");
        check_keys(f, {"horizon", "top"}, "forecast");
        read(f, "horizon", c.horizon, "forecast");
        read(f, "top", c.top, "forecast");
    }
    read(j, "seed", c.seed, "config");
    c.em.seed = c.seed;
    validate(c);
    return c;
}

PipelineConfig load_config(const fs::path& path) {
    std::string text;
    try {
        text = read_bytes(path);
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
    PipelineConfig c = parse_config(text, fs::absolute(path).parent_path());
    c.source = path;
    return c;
}

void validate(const PipelineConfig& c) {
    if (!(c.train_end < c.calibration_end))
        throw ConfigError("partitions: train_end (" + c.train_end.to_string() + ") must precede calibration_end (" +
                          c.calibration_end.to_string() + ")");
    if (!(c.calibration_end < c.test_end))
        throw ConfigError("partitions: calibration_end (" + c.calibration_end.to_string() +
                          ") must precede test_end (" + c.test_end.to_string() + ")");
    if (c.train_end < c.backfill_start) throw ConfigError("backfill_start must not follow train_end");
    if (c.models.empty()) throw ConfigError("models: at least one model is required");
    static const std::regex safe("[A-Za-z0-9_.-]+");
    std::set<std::string> names;
    for (const auto& m : c.models) {
        if (!std::regex_match(m.name, safe))
            throw ConfigError("models: name '" + m.name + "' must match [A-Za-z0-9_.-]+");
        if (m.name == "ensemble") throw ConfigError("models: 'ensemble' is a reserved name");
        if (!names.insert(m.name).second) throw ConfigError("models: duplicate name '" + m.name + "'");
    }
    if (c.horizon < 1) throw ConfigError("forecast.horizon must be >= 1");
    if (c.top < 1) throw ConfigError("forecast.top must be >= 1");
    if (!(c.static_threshold > 0 && c.static_threshold < 1)) throw ConfigError("variance.threshold must be in (0,1)");
    if (!(c.report.beta_f > 0)) throw ConfigError("evaluation.beta_f must be positive");
    if (c.report.window < 0) throw ConfigError("evaluation.window must be >= 0");
    if (c.em.restarts < 0) throw ConfigError("ensemble.restarts must be >= 0");
    if (c.em.max_iterations < 1 || c.fit.max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    for (std::size_t i = 0; i < c.transforms.size(); ++i) {
        const auto& t = c.transforms[i];
        const std::string ctx = "transforms[" + std::to_string(i) + "]";
        if (t.kind != Transform::Kind::AggregateEvents && t.covariate.empty())
            throw ConfigError(ctx + ": 'covariate' is required");
        switch (t.kind) {
        case Transform::Kind::AggregateEvents:
            if (c.events.empty()) throw ConfigError(ctx + ": aggregate_events needs data.events");
            break;
        case Transform::Kind::Lag:
            if (t.k < 1) throw ConfigError(ctx + ": k must be >= 1");
            break;
        case Transform::Kind::Log:
            if (t.offset < 0) throw ConfigError(ctx + ": offset must be >= 0");
            break;
        case Transform::Kind::SpatialLag:
            if ((t.scheme == WeightScheme::Knn4 || t.scheme == WeightScheme::CentDist) && c.centroids.empty())
                throw ConfigError(ctx + ": scheme " + scheme_tag(t.scheme) + " needs data.centroids");
            if (t.scheme != WeightScheme::Knn4 && t.scheme != WeightScheme::CentDist &&
                t.numeric_features.empty() && t.categorical_features.empty())
                throw ConfigError(ctx + ": Gower schemes need 'features'");
            break;
        }
    }
}

// ---------------------------------------------------------------------------
// Stages

const std::vector<Stage>& all_stages() {
    static const std::vector<Stage> stages{Stage::BuildSpells, Stage::BuildLags, Stage::DecomposeVariance,
                                           Stage::Fit,         Stage::Calibrate, Stage::Evaluate,
                                           Stage::Forecast};
    return stages;
}

std::string stage_name(Stage stage) {
    switch (stage) {
    case Stage::BuildSpells: return "build-spells";
    case Stage::BuildLags: return "build-lags";
    case Stage::DecomposeVariance: return "decompose-variance";
    case Stage::Fit: return "fit";
    case Stage::Calibrate: return "calibrate";
    case Stage::Evaluate: return "evaluate";
    case Stage::Forecast: break;
    }
    return "forecast";
}

Stage parse_stage(const std::string& name) {
    for (Stage s : all_stages())
        if (stage_name(s) == name) return s;
    throw ConfigError("unknown stage '" + name + "'");
}

namespace {

const char* kSpellPanel = "spells/duration_panel.csv";
const char* kLagPanel = "lags/panel.csv";
const char* kEnsembleFile = "ensemble/ensemble.json";
const char* kManifest = "manifest.json";

std::string fit_file(const std::string& model) { return "fits/" + model + ".json"; }

// Collects stage outputs as temporary files; renames them on commit and
// removes them otherwise.
class Outputs {
public:
    explicit Outputs(fs::path root) : root_(std::move(root)) {}
    Outputs(const Outputs&) = delete;
    Outputs& operator=(const Outputs&) = delete;
    ~Outputs() {
        if (committed_) return;
        std::error_code ec;
        for (const auto& [tmp, final] : files_) fs::remove(tmp, ec);
    }

    std::string file(const std::string& relative) {
        const fs::path final = root_ / relative;
        fs::create_directories(final.parent_path());
        fs::path tmp = final;
        tmp += ".tmp";
        files_.emplace_back(tmp, final);
        return tmp.string();
    }

    void commit() {
        for (const auto& [tmp, final] : files_) fs::rename(tmp, final);
        committed_ = true;
    }

private:
    fs::path root_;
    std::vector<std::pair<fs::path, fs::path>> files_;
    bool committed_ = false;
};

struct Context {
    const PipelineConfig& config;
    fs::path out;
    const RunOptions& options;
    Stage stage;
    std::uint64_t seed;

    void log(const std::string& message) const {
        if (options.log) options.log(stage_name(stage), message);
    }

    fs::path require(const std::string& relative, Stage producer) const {
        const fs::path p = out / relative;
        if (!fs::exists(p))
            throw Error("missing " + relative + "; run stage '" + stage_name(producer) + "' first");
        return p;
    }
};

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    for (const auto& l : lines) out << l << '\n';
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

Panel read_artifact_panel(const fs::path& path) {
    const auto table = csv::read_file(path.string());
    PanelSchema schema;
    if (table.column("name")) schema.name_column = "name";
    return ingest_panel(table, schema);
}

Panel through(const Panel& panel, YearMonth end) {
    return panel.filter([&](std::size_t i) { return panel.month(i) <= end; });
}

std::vector<spdur::SpdurFit> load_fits(const Context& ctx) {
    std::vector<spdur::SpdurFit> fits;
    for (const auto& m : ctx.config.models) {
        auto fit = spdur::load_fit(ctx.require(fit_file(m.name), Stage::Fit).string());
        if (!(fit.spec == m.spec))
            throw Error(fit_file(m.name) + " does not match the configured formulas; rerun stage 'fit'");
        fits.push_back(std::move(fit));
    }
    return fits;
}

std::string partition_of(const PipelineConfig& c, YearMonth m) {
    if (m <= c.train_end) return "train";
    if (m <= c.calibration_end) return "calibration";
    return "test";
}

// Raw monthly conditional hazards, rows x models; NaN where a covariate is missing.
Eigen::MatrixXd component_predictions(const Panel& panel, std::span<const spdur::SpdurFit> fits) {
    Eigen::MatrixXd raw(static_cast<Eigen::Index>(panel.size()), static_cast<Eigen::Index>(fits.size()));
    for (std::size_t i = 0; i < panel.size(); ++i)
        for (std::size_t k = 0; k < fits.size(); ++k) {
            const auto p = spdur::predict_row(fits[k], panel, i);
            raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                p ? p->cond_hazard : std::numeric_limits<double>::quiet_NaN();
        }
    return raw;
}

std::string quad_short(Quad q) {
    switch (q) {
    case Quad::VerbalCoop: return "verb.coop";
    case Quad::MaterialCoop: return "matl.coop";
    case Quad::VerbalConf: return "verb.conf";
    case Quad::MaterialConf: break;
    }
    return "matl.conf";
}

void stage_build_spells(const Context& ctx, Outputs& out) {
    const auto& c = ctx.config;
    const Panel panel = ingest_panel(c.panel.string(), c.panel_schema);
    const auto history = read_history(c.history.string(), c.history_schema);
    const auto result = build_spells(history, panel, c.backfill_start);
    for (const auto& w : result.warnings) ctx.log("warning: " + w);
    result.panel.write_csv(out.file(kSpellPanel));

    std::ofstream spells(out.file("spells/spells.csv"), std::ios::binary);
    csv::write_row(spells, {"country_id", "start", "end", "ended_in_failure", "right_censored", "state_exit"});
    for (const auto& s : result.spells)
        csv::write_row(spells, {std::to_string(s.country_id), s.start.to_string(), s.end.to_string(),
                                std::to_string(int(s.ended_in_failure)), std::to_string(int(s.right_censored)),
                                std::to_string(int(s.state_exit))});
    write_lines(out.file("spells/warnings.txt"), result.warnings);
    ctx.log(std::to_string(panel.size()) + " rows, " + std::to_string(result.spells.size()) + " spells");
}

void write_weights(const std::string& path, const WeightMatrix& w) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    csv::write_row(out, {"from", "to", "weight"});
    for (std::size_t i = 0; i < w.countries.size(); ++i)
        for (std::size_t j = 0; j < w.countries.size(); ++j) {
            const double v = w.weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (v != 0)
                csv::write_row(out, {std::to_string(w.countries[i]), std::to_string(w.countries[j]),
                                     csv::format_double(v)});
        }
}

void stage_build_lags(const Context& ctx, Outputs& out) {
    const auto& c = ctx.config;
    Panel panel = read_artifact_panel(ctx.require(kSpellPanel, Stage::BuildSpells));
    std::optional<std::vector<EventRecord>> events;
    std::optional<CentroidSet> centroids;
    std::map<std::string, WeightMatrix> matrices;
    std::vector<std::string> warnings;

    for (std::size_t i = 0; i < c.transforms.size(); ++i) {
        const auto& t = c.transforms[i];
        try {
            switch (t.kind) {
            case Transform::Kind::AggregateEvents: {
                if (!events) events = read_events(c.events.string(), c.event_schema);
                const std::string name = t.name.empty() ? "i." + quad_short(t.quad) + "." + to_string(t.source) +
                                                              "t" + to_string(t.target)
                                                        : t.name;
                panel = with_event_counts(panel, aggregate_events(*events, t.source, t.target, t.quad), name);
                break;
            }
            case Transform::Kind::Lag:
                panel = t.name.empty() ? lag_covariate(panel, t.covariate, t.k)
                                       : shift_covariate(panel, t.covariate, t.k, t.name);
                break;
            case Transform::Kind::Log:
                panel = log_transform(panel, t.covariate, t.base, t.offset, t.name);
                break;
            case Transform::Kind::SpatialLag: {
                std::string key = scheme_tag(t.scheme);
                for (const auto& f : t.numeric_features) key += "|n:" + f;
                for (const auto& f : t.categorical_features) key += "|c:" + f;
                auto it = matrices.find(key);
                if (it == matrices.end()) {
                    WeightMatrix w;
                    if (t.scheme == WeightScheme::Knn4 || t.scheme == WeightScheme::CentDist) {
                        if (!centroids) {
                            centroids = read_centroids(c.centroids.string());
                            for (const auto& wmsg : centroids->warnings) warnings.push_back(wmsg);
                        }
                        w = t.scheme == WeightScheme::Knn4 ? knn4_weights(centroids->centroids)
                                                           : centdist_weights(centroids->centroids);
                    } else {
                        // Features summarize the training window only.
                        const auto features = gower_features_from_panel(
                            panel, t.numeric_features, t.categorical_features, panel.first_month(), c.train_end);
                        w = gower_weights(features, t.scheme);
                    }
                    for (const auto& wmsg : w.warnings) warnings.push_back(scheme_tag(t.scheme) + ": " + wmsg);
                    it = matrices.emplace(key, std::move(w)).first;
                }
                Panel lagged = spatial_lag(panel, t.covariate, it->second);
                if (!t.name.empty()) {
                    const std::string produced = "W." + scheme_tag(t.scheme) + "." + t.covariate;
                    lagged = lagged.with_covariate(t.name, lagged.covariate(produced));
                }
                panel = std::move(lagged);
                break;
            }
            }
        } catch (const Error& e) {
            throw Error("transforms[" + std::to_string(i) + "]: " + e.what());
        }
    }

    for (const auto& m : c.models) {
        for (const auto* formula : {&m.spec.duration, &m.spec.risk})
            for (const auto& name : *formula)
                if (!panel.has_covariate(name))
                    throw ConfigError("model '" + m.name + "' references unknown covariate '" + name + "'");
    }
    for (const auto& w : warnings) ctx.log("warning: " + w);
    panel.write_csv(out.file(kLagPanel));
    std::set<std::string> written;
    for (const auto& [key, w] : matrices) {
        // One file per scheme; a scheme used with several feature sets gets a counter.
        std::string base = "lags/weights_" + scheme_tag(w.scheme);
        std::string name = base + ".csv";
        for (int k = 2; written.count(name); ++k) name = base + "_" + std::to_string(k) + ".csv";
        written.insert(name);
        write_weights(out.file(name), w);
    }
    write_lines(out.file("lags/warnings.txt"), warnings);
    ctx.log(std::to_string(panel.covariate_names().size()) + " covariates");
}

void stage_variance(const Context& ctx, Outputs& out) {
    const auto& c = ctx.config;
    const Panel panel = through(read_artifact_panel(ctx.require(kLagPanel, Stage::BuildLags)), c.test_end);
    std::vector<std::string> names = c.variance_covariates;
    if (names.empty())
        for (const auto& n : panel.covariate_names())
            if (std::find(kDurationColumns.begin(), kDurationColumns.end(), n) == kDurationColumns.end())
                names.push_back(n);
    const auto reports = decompose_all(panel, names, c.static_threshold);
    write_variance_csv(out.file("variance/variance.csv"), reports);
    write_variance_points(out.file("variance/points.csv"), reports);
    ctx.log(std::to_string(reports.size()) + " covariates decomposed");
}

void stage_fit(const Context& ctx, Outputs& out) {
    const auto& c = ctx.config;
    const Panel panel = read_artifact_panel(ctx.require(kLagPanel, Stage::BuildLags));
    // Only rows through the training boundary, with spell membership re-coded
    // as if observation ended there.
    const Panel train = recode_window(panel, c.train_end).panel;

    std::vector<std::optional<spdur::SpdurFit>> fits(c.models.size());
    std::vector<std::string> errors(c.models.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < c.models.size(); k = next++) {
            try {
                fits[k] = spdur::fit(train, c.models[k].spec, c.fit);
            } catch (const std::exception& e) {
                errors[k] = e.what();
            }
        }
    };
    const int jobs = std::clamp(ctx.options.jobs, 1, static_cast<int>(c.models.size()));
    std::vector<std::thread> threads;
    for (int j = 1; j < jobs; ++j) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    for (std::size_t k = 0; k < c.models.size(); ++k)
        if (!errors[k].empty()) throw Error("model '" + c.models[k].name + "': " + errors[k]);

    std::ofstream coef(out.file("fits/coefficients.csv"), std::ios::binary);
    csv::write_row(coef, {"model", "equation", "term", "estimate", "std_error", "z", "p"});
    for (std::size_t k = 0; k < c.models.size(); ++k) {
        const auto& fit = *fits[k];
        spdur::save_fit(out.file(fit_file(c.models[k].name)), fit);
        for (const auto& co : fit.coefficients())
            csv::write_row(coef, {c.models[k].name, co.equation, co.name, csv::format_double(co.estimate),
                                  csv::format_double(co.std_error), csv::format_double(co.z),
                                  csv::format_double(co.p_value)});
        for (const auto& w : fit.warnings) ctx.log("warning: " + c.models[k].name + ": " + w);
        ctx.log(c.models[k].name + ": n=" + std::to_string(fit.n_obs) + " failures=" +
                std::to_string(fit.n_failures) + " loglik=" + csv::format_double(fit.loglik) +
                " alpha=" + csv::format_double(fit.alpha) + (fit.converged ? "" : " (not converged)"));
    }
}

void stage_calibrate(const Context& ctx, Outputs& out) {
    const auto& c = ctx.config;
    const Panel panel = read_artifact_panel(ctx.require(kLagPanel, Stage::BuildLags));
    const auto fits = load_fits(ctx);
    const Panel calib = panel.filter(
        [&](std::size_t i) { return panel.month(i) > c.train_end && panel.month(i) <= c.calibration_end; });
    if (calib.empty()) throw Error("no rows in the calibration partition");
    const auto raw = component_predictions(calib, fits);
    const auto& failure = calib.covariate("failure");
    std::vector<int> outcomes(calib.size());
    for (std::size_t i = 0; i < calib.size(); ++i) outcomes[i] = failure[i] ? static_cast<int>(*failure[i]) : 0;

    std::vector<std::string> names;
    for (const auto& m : c.models) names.push_back(m.name);
    ebma::EmOptions em = c.em;
    em.seed = ctx.seed;
    const auto ensemble = ebma::fit_ensemble(raw, outcomes, names, c.calibration, em);
    for (const auto& cal : ensemble.calibrations)
        for (const auto& w : cal.warnings) ctx.log("warning: " + cal.model + ": " + w);
    if (!ensemble.converged) ctx.log("warning: EM stopped at the iteration limit");
    ebma::save_ensemble(out.file(kEnsembleFile), ensemble);
    ebma::write_weight_table(out.file("ensemble/weights.csv"), ensemble);
    std::string summary = "weights";
    for (std::size_t k = 0; k < names.size(); ++k)
        summary += " " + names[k] + "=" + csv::format_double(ensemble.weights[k]);
    ctx.log(summary);
}

void stage_evaluate(const Context& ctx, Outputs& out) {
    const auto& c = ctx.config;
    const Panel panel = through(read_artifact_panel(ctx.require(kLagPanel, Stage::BuildLags)), c.test_end);
    const auto fits = load_fits(ctx);
    const auto ensemble = ebma::load_ensemble(ctx.require(kEnsembleFile, Stage::Calibrate).string());
    const auto raw = component_predictions(panel, fits);
    const Eigen::VectorXd ens = ebma::predict_ensemble(ensemble, raw);
    const auto& failure = panel.covariate("failure");

    std::vector<std::string> names;
    for (const auto& m : c.models) names.push_back(m.name);
    names.push_back("ensemble");
    const std::vector<std::string> partitions{"train", "calibration", "test"};
    std::map<std::pair<std::string, std::string>, eval::ScoredSet> sets;
    for (const auto& n : names)
        for (const auto& p : partitions) {
            auto& s = sets[{n, p}];
            s.model = n;
            s.partition = p;
        }
    for (std::size_t k = 0; k + 1 < names.size(); ++k)
        for (const auto& p : partitions) sets[{names[k], p}].weight = ensemble.weights[k];

    std::ofstream preds(out.file("evaluation/predictions.csv"), std::ios::binary);
    std::vector<std::string> header{"country_id", "year", "month", "partition", "failure"};
    header.insert(header.end(), names.begin(), names.end());
    csv::write_row(preds, header);
    for (std::size_t i = 0; i < panel.size(); ++i) {
        if (!failure[i]) continue;
        const std::string part = partition_of(c, panel.month(i));
        const int y = static_cast<int>(*failure[i]);
        std::vector<std::string> row{std::to_string(panel.country(i)), std::to_string(panel.month(i).year),
                                     std::to_string(panel.month(i).month), part, std::to_string(y)};
        for (std::size_t k = 0; k < names.size(); ++k) {
            const double p = k + 1 < names.size()
                                 ? raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k))
                                 : ens(static_cast<Eigen::Index>(i));
            row.push_back(std::isfinite(p) ? csv::format_double(p) : "");
            if (std::isfinite(p)) sets[{names[k], part}].rows.push_back({panel.country(i), panel.month(i), p, y});
        }
        csv::write_row(preds, row);
    }

    std::vector<eval::ScoredSet> ordered;
    for (const auto& n : names)
        for (const auto& p : partitions) ordered.push_back(std::move(sets[{n, p}]));
    const auto report = eval::fit_report(ordered, c.report);
    eval::write_fit_report(out.file("evaluation/fit_report.csv"), report);

    // Curve data for the ensemble on held-out rows.
    const auto& test = ordered[ordered.size() - 1];
    std::vector<double> p;
    std::vector<int> y;
    for (const auto& r : test.rows) {
        p.push_back(r.prediction);
        y.push_back(r.outcome);
    }
    eval::write_separation_plot(out.file("evaluation/separation_test.csv"), eval::separation_plot_data(p, y));
    const long pos = std::count(y.begin(), y.end(), 1);
    if (pos > 0 && pos < static_cast<long>(y.size()))
        eval::write_roc_curve(out.file("evaluation/roc_test.csv"), eval::roc_auc(p, y));
    else
        ctx.log("warning: test partition lacks one outcome class; no ROC curve written");
    for (const auto& r : report)
        if (r.model == "ensemble" && r.block == "monthly")
            ctx.log("ensemble " + r.partition + ": AUC=" + csv::format_optional(r.auc) +
                    " brier=" + csv::format_optional(r.brier));
}

void stage_forecast(const Context& ctx, Outputs& out) {
    const auto& c = ctx.config;
    const Panel panel = through(read_artifact_panel(ctx.require(kLagPanel, Stage::BuildLags)), c.test_end);
    const auto fits = load_fits(ctx);
    const auto ensemble = ebma::load_ensemble(ctx.require(kEnsembleFile, Stage::Calibrate).string());
    const auto result = forecast::forecast(ensemble, fits, panel, c.horizon);
    forecast::write_forecast_csv(out.file("forecast/forecast.csv"), result);
    forecast::write_forecast_map(out.file("forecast/map.csv"), result);
    forecast::write_rank_report(out.file("forecast/report.txt"), result, static_cast<std::size_t>(c.top));
    for (const auto& x : result.excluded) ctx.log("excluded " + std::to_string(x.country_id) + ": " + x.reason);
    ctx.log(std::to_string(result.entries.size()) + " countries forecast from " + result.last_observed.to_string());
}

// ---------------------------------------------------------------------------
// Manifest

json library_versions() {
    return {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"openssl", OPENSSL_VERSION_TEXT}};
}

std::optional<json> read_manifest(const fs::path& out) {
    const fs::path p = out / kManifest;
    if (!fs::exists(p)) return std::nullopt;
    try {
        return json::parse(read_bytes(p));
    } catch (const json::exception& e) {
        throw Error(std::string("unreadable manifest: ") + e.what());
    }
}

void check_manifest(const Context& ctx) {
    const auto m = read_manifest(ctx.out);
    if (!m) return;
    if (m->value("config_sha256", "") != ctx.config.sha256)
        throw Error("artifact directory was produced with a different config; use a fresh --out directory");
    if (m->value("seed", std::uint64_t{0}) != ctx.seed)
        throw Error("artifact directory was produced with seed " + std::to_string(m->value("seed", std::uint64_t{0})) +
                    "; use the same --seed or a fresh --out directory");
}

json hash_outputs(const fs::path& out) {
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(out)) {
        if (!e.is_regular_file()) continue;
        const std::string rel = fs::relative(e.path(), out).generic_string();
        if (rel == kManifest || e.path().extension() == ".tmp") continue;
        files.push_back(rel);
    }
    std::sort(files.begin(), files.end());
    json hashes = json::object();
    for (const auto& f : files) hashes[f] = sha256_file(out / f);
    return hashes;
}

void update_manifest(const Context& ctx) {
    const auto& c = ctx.config;
    std::set<std::string> done;
    if (auto m = read_manifest(ctx.out))
        for (const auto& s : m->value("stages", json::array())) done.insert(s.get<std::string>());
    done.insert(stage_name(ctx.stage));
    json stages = json::array();
    for (Stage s : all_stages())
        if (done.count(stage_name(s))) stages.push_back(stage_name(s));

    json m;
    m["tool"] = "ilcast";
    m["version"] = kVersion;
    m["config_sha256"] = c.sha256;
    m["seed"] = ctx.seed;
    m["libraries"] = library_versions();
    m["partitions"] = {{"train_end", c.train_end.to_string()},
                       {"calibration_end", c.calibration_end.to_string()},
                       {"test_end", c.test_end.to_string()}};
    m["provenance"] = {
        {"fit", {{"rows_through", c.train_end.to_string()}, {"spell_coding_window_end", c.train_end.to_string()}}},
        {"calibrate",
         {{"rows_from", (c.train_end + 1).to_string()}, {"rows_through", c.calibration_end.to_string()}}},
        {"gower_features", {{"rows_through", c.train_end.to_string()}}}};
    m["stages"] = stages;
    m["outputs"] = hash_outputs(ctx.out);
    const fs::path tmp = ctx.out / "manifest.json.tmp";
    write_json(tmp.string(), m);
    fs::rename(tmp, ctx.out / kManifest);
}

} // namespace

void run_stage(const PipelineConfig& config, Stage stage, const fs::path& out, const RunOptions& options) {
    const Context ctx{config, out, options, stage, options.seed.value_or(config.seed)};
    try {
        fs::create_directories(out);
        check_manifest(ctx);
        Outputs outputs(out);
        switch (stage) {
        case Stage::BuildSpells: stage_build_spells(ctx, outputs); break;
        case Stage::BuildLags: stage_build_lags(ctx, outputs); break;
        case Stage::DecomposeVariance: stage_variance(ctx, outputs); break;
        case Stage::Fit: stage_fit(ctx, outputs); break;
        case Stage::Calibrate: stage_calibrate(ctx, outputs); break;
        case Stage::Evaluate: stage_evaluate(ctx, outputs); break;
        case Stage::Forecast: stage_forecast(ctx, outputs); break;
        }
        outputs.commit();
        update_manifest(ctx);
    } catch (const StageError&) {
        throw;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage_name(stage), e.what());
    }
}

void run(const PipelineConfig& config, const fs::path& out, const RunOptions& options) {
    const fs::path target = fs::absolute(out).lexically_normal();
    if (fs::exists(target)) {
        if (!fs::is_directory(target)) throw ConfigError("--out '" + out.string() + "' is not a directory");
        if (!fs::is_empty(target) && !fs::exists(target / kManifest))
            throw ConfigError("--out '" + out.string() + "' is not empty and holds no manifest; refusing to replace it");
    }
    fs::path scratch = target;
    scratch += ".partial";
    fs::remove_all(scratch);
    try {
        for (Stage s : all_stages()) run_stage(config, s, scratch, options);
    } catch (...) {
        std::error_code ec;
        fs::remove_all(scratch, ec);
        throw;
    }
    fs::remove_all(target);
    fs::rename(scratch, target);
}

std::vector<std::string> verify_manifest(const fs::path& out) {
    std::vector<std::string> problems;
    const auto m = read_manifest(out);
    if (!m) return {"manifest.json not found"};
    const json recorded = m->value("outputs", json::object());
    const json actual = hash_outputs(out);
    for (const auto& [file, hash] : recorded.items()) {
        if (!actual.contains(file))
            problems.push_back("missing output " + file);
        else if (actual.at(file) != hash)
            problems.push_back("hash mismatch for " + file);
    }
    for (const auto& [file, hash] : actual.items())
        if (!recorded.contains(file)) problems.push_back("unrecorded file " + file);
    return problems;
}

} // namespace ilcast::pipeline
