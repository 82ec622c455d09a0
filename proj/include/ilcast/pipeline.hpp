#pragma once

#include "ilcast/calendar.hpp"
#include "ilcast/ebma.hpp"
#include "ilcast/error.hpp"
#include "ilcast/evaluation.hpp"
#include "ilcast/panel.hpp"
#include "ilcast/spatial.hpp"
#include "ilcast/spdur.hpp"
#include "ilcast/spells.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ilcast::pipeline {

inline constexpr const char* kVersion = "1.0.0";

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Failure inside a pipeline stage; what() is prefixed with the stage name.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& cause)
        : Error("stage '" + stage + "': " + cause), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct Transform {
    enum class Kind { AggregateEvents, Lag, Log, SpatialLag };
    Kind kind = Kind::Lag;
    std::string covariate;
    std::string name;  ///< output name; empty means the default naming rule
    Sector source = Sector::DIS;
    Sector target = Sector::GOV;
    Quad quad = Quad::MaterialConf;
    int k = 1;
    LogBase base = LogBase::Ten;
    double offset = 1.0;
    WeightScheme scheme = WeightScheme::Knn4;
    std::vector<std::string> numeric_features;
    std::vector<std::string> categorical_features;
};

struct ModelSpec {
    std::string name;
    spdur::SpdurSpec spec;
};

struct PipelineConfig {
    std::filesystem::path source;  ///< config file, empty when built in memory
    std::string sha256;            ///< hash of the config file bytes
    std::filesystem::path panel;
    std::filesystem::path history;
    std::filesystem::path events;     ///< optional
    std::filesystem::path centroids;  ///< optional
    PanelSchema panel_schema;
    HistorySchema history_schema;
    EventSchema event_schema;
    YearMonth backfill_start = kDefaultBackfillStart;
    YearMonth train_end{2009, 12};
    YearMonth calibration_end{2012, 4};
    YearMonth test_end{2014, 3};
    std::vector<Transform> transforms;
    std::vector<std::string> variance_covariates;  ///< empty: every non-duration covariate
    double static_threshold = 0.5;
    std::vector<ModelSpec> models;
    spdur::FitOptions fit;
    ebma::CalibrationOptions calibration;
    ebma::EmOptions em;
    eval::ReportOptions report;
    int horizon = 6;
    int top = 20;
    std::uint64_t seed = 1;
};

/// Parses a JSON config. Relative paths resolve against `base_dir`.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);
/// Reads, parses and validates a config file; records its SHA-256.
PipelineConfig load_config(const std::filesystem::path& path);
/// Throws ConfigError on violated invariants (partition order, model names, horizon, ...).
void validate(const PipelineConfig& config);

enum class Stage { BuildSpells, BuildLags, DecomposeVariance, Fit, Calibrate, Evaluate, Forecast };

const std::vector<Stage>& all_stages();
std::string stage_name(Stage stage);
Stage parse_stage(const std::string& name);

struct RunOptions {
    /// Overrides the config seed when set.
    std::optional<std::uint64_t> seed;
    /// Worker threads for per-model fitting. Output does not depend on it.
    int jobs = 1;
    std::function<void(const std::string& stage, const std::string& message)> log;
};

/// Runs one stage, reading upstream artifacts from and writing into `out`.
/// Outputs are written to temporary files and renamed on success; the
/// manifest is updated afterwards. Throws StageError.
void run_stage(const PipelineConfig& config, Stage stage, const std::filesystem::path& out,
               const RunOptions& options = {});

/// Runs every stage into a scratch directory next to `out` and renames it
/// into place on success. An existing `out` is replaced only when it is empty
/// or holds a previous artifact directory (has manifest.json).
void run(const PipelineConfig& config, const std::filesystem::path& out, const RunOptions& options = {});

/// Hex SHA-256 of a byte string / file.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Recomputes output hashes; returns a description of every mismatch.
std::vector<std::string> verify_manifest(const std::filesystem::path& out);

} // namespace ilcast::pipeline
