#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deformcast/dataset.hpp"
#include "deformcast/model.hpp"

namespace deformcast {

enum class TrainScope { PerObject, AllObjects };

struct TrainConfig {
    int epochs = 40;
    int batch_size = 4;
    double learning_rate = 1e-3;
    double lambda_g = 0.1;
    std::optional<int> patch_size;  // 1024, 64, or empty for the full mesh
    std::uint64_t seed = 0;
    std::string checkpoint_dir = ".";
    AblationMode ablation = AblationMode::Both;
    ModelConfig model;
    std::string precision = "f32";  // "f32" or "f64"
    int workers = 0;                // 0 = hardware concurrency, capped at batch size

    void validate() const {
        if (epochs < 1 || batch_size < 1 || learning_rate <= 0.0 || lambda_g < 0.0)
            throw std::invalid_argument("train config: epochs/batch >= 1, lr > 0, lambda_g >= 0");
        if (precision != "f32" && precision != "f64")
            throw std::invalid_argument("train config: precision must be f32 or f64");
        model.validate();
    }
};

struct EpochLog {
    int epoch = 0;
    double l_mse = 0.0;
    double l_graph = 0.0;
    double l_total = 0.0;
    double val_mse = 0.0;
};

struct TrainedNet {
    std::string name;  // object name, or "all"
    std::string final_checkpoint;
    std::string best_checkpoint;
    std::vector<EpochLog> log;
};

struct TrainResult {
    std::vector<TrainedNet> nets;
};

using LogFn = std::function<void(const std::string&)>;

/// Adam over shuffled train batches; per-sample tapes run on worker threads
/// and gradients are averaged in sample order, so results are seed-exact.
TrainResult train(const TrainConfig& config, const std::string& data_dir, TrainScope scope,
                  const LogFn& log = {});

struct EvalRow {
    std::string object;
    double consistency = 0.0;           // prediction vs rest graph
    double consistency_vs_truth = 0.0;  // prediction vs ground-truth deformation
    double mae = 0.0;
    double mse = 0.0;
    double baseline_mse = 0.0;          // predicting zero deformation
    int samples = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    EvalRow aggregate;       // arithmetic mean of the rows
    double data_ms = 0.0;    // per batch, averaged
    double network_ms = 0.0; // per batch, averaged
    int batches = 0;
    int batch_size = 0;
};

struct EvalOptions {
    std::string split = "test";
    int batch_size = 4;
    int workers = 0;
    /// Test hook: overrides the network with an arbitrary predictor mapping a
    /// training instance to normalized positions.
    std::function<MatX3(const TrainingInstance&)> predictor_override;
};

/// Metrics are computed in normalized (model-space) coordinates.
EvalReport evaluate(const std::string& data_dir, const std::string& checkpoint_path,
                    const EvalOptions& opts = {});

/// Predictor-injection flavor used by tests; patch/ablation supplied directly.
EvalReport evaluate_predictor(const std::string& data_dir, std::optional<int> patch_size,
                              const EvalOptions& opts);

struct AblationRow {
    std::string label;  // only_physics / only_positional / both
    double mae = 0.0;
    double mse = 0.0;
};

struct AblationReport {
    std::vector<AblationRow> rows;
    bool init_bitwise_identical = false;
    std::string best_mse_label;
};

/// Trains the three encoding configurations with identical seeds and reports
/// test MAE/MSE for each. Parameter initialization equality across rows is
/// verified bit-for-bit.
AblationReport run_ablation(const std::string& data_dir, const TrainConfig& base,
                            const LogFn& log = {});

struct BenchReport {
    double data_ms = 0.0;
    double network_ms = 0.0;
    int batches = 0;
    int batch_size = 0;
    int soft_nodes = 0;  // typical patch size
};

/// Times data preparation vs network forward for batches drawn from the
/// dataset, cycling if fewer samples than requested batches.
BenchReport bench(const std::string& data_dir, const std::string& checkpoint_path, int batches,
                  int batch_size = 4, int workers = 0);

/// Runs the checkpointed network on one rest/rigid/meta triple and writes the
/// deformed mesh as OBJ with the rest face list.
void predict_to_obj(const std::string& rest_path, const std::string& rigid_path,
                    const std::string& meta_path, const std::string& checkpoint_path,
                    const std::string& out_path);

// report serialization (JSON)
void write_eval_report(const std::string& path, const EvalReport& report);
void write_ablation_report(const std::string& path, const AblationReport& report);
void write_bench_report(const std::string& path, const BenchReport& report);

}  // namespace deformcast
