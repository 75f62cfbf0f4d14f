// deformcast: simulate contact datasets, train/evaluate the deformation
// network, and run single predictions. Errors leave a machine-readable JSON
// object on stderr and a nonzero exit code.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "deformcast/dataset.hpp"
#include "deformcast/shapes.hpp"
#include "deformcast/sim.hpp"
#include "deformcast/train.hpp"

namespace fs = std::filesystem;
using namespace deformcast;

namespace {

std::vector<DatasetObject> resolve_objects(const std::string& spec) {
    std::vector<DatasetObject> objects;
    auto add_builtin = [&](const std::string& name) {
        const MaterialDefaults mat = builtin_material(name);
        objects.push_back({name, builtin_object(name), mat.stiffness, mat.damping});
    };
    if (spec.empty() || spec == "all" || spec == "builtin") {
        for (const auto& name : builtin_object_names()) add_builtin(name);
        return objects;
    }
    if (fs::is_directory(spec)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(spec)) {
            const std::string ext = entry.path().extension().string();
            if (ext == ".obj" || ext == ".off") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty())
            throw std::invalid_argument("no .obj/.off meshes found in directory " + spec);
        for (const auto& f : files)
            objects.push_back({f.stem().string(), load_mesh(f.string()), 0.8, 0.03});
        return objects;
    }
    std::stringstream ss(spec);
    std::string name;
    while (std::getline(ss, name, ',')) {
        if (!name.empty()) add_builtin(name);
    }
    if (objects.empty()) throw std::invalid_argument("no objects in spec: " + spec);
    return objects;
}

std::optional<int> parse_patch(const std::string& text) {
    if (text.empty() || text == "none" || text == "full") return std::nullopt;
    const int value = std::stoi(text);
    if (value < 1) throw std::invalid_argument("patch size must be >= 1 or 'none'");
    return value;
}

void print_eval(const EvalReport& report) {
    auto line = [](const EvalRow& r) {
        std::cout << "  " << r.object << ": consistency=" << r.consistency
                  << " mae=" << r.mae << " mse=" << r.mse << " baseline_mse=" << r.baseline_mse
                  << " (n=" << r.samples << ")\n";
    };
    for (const auto& r : report.rows) line(r);
    line(report.aggregate);
    std::cout << "  timing per batch of " << report.batch_size << ": data " << report.data_ms
              << " ms, network " << report.network_ms << " ms over " << report.batches
              << " batches\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"soft-body deformation prediction toolkit"};
    app.require_subcommand(1);

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "generate a contact dataset");
    std::string sim_objects = "all", sim_out;
    int sim_scenarios = 200;
    std::uint64_t sim_seed = 0;
    int sim_workers = 0;
    sim_cmd->add_option("--objects", sim_objects, "mesh directory or comma-separated builtin names");
    sim_cmd->add_option("--scenarios", sim_scenarios, "scenarios per object")->required();
    sim_cmd->add_option("--seed", sim_seed, "base seed");
    sim_cmd->add_option("--out", sim_out, "output dataset directory")->required();
    sim_cmd->add_option("--workers", sim_workers, "worker threads (0 = auto)");

    // train
    auto* train_cmd = app.add_subcommand("train", "train deformation networks");
    std::string train_data, train_scope = "all", train_patch = "1024", train_out = "checkpoints";
    std::string train_precision = "f32";
    TrainConfig tc;
    train_cmd->add_option("--data", train_data, "dataset directory")->required();
    train_cmd->add_option("--scope", train_scope, "per-object | all");
    train_cmd->add_option("--epochs", tc.epochs, "training epochs");
    train_cmd->add_option("--batch", tc.batch_size, "batch size");
    train_cmd->add_option("--lr", tc.learning_rate, "learning rate");
    train_cmd->add_option("--lambda-g", tc.lambda_g, "graph consistency weight");
    train_cmd->add_option("--patch-size", train_patch, "1024 | 64 | none");
    train_cmd->add_option("--seed", tc.seed, "init + shuffle seed");
    train_cmd->add_option("--out", train_out, "checkpoint directory");
    train_cmd->add_option("--precision", train_precision, "f32 | f64");
    train_cmd->add_option("--workers", tc.workers, "worker threads (0 = auto)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_data, eval_ckpt, eval_split = "test", eval_report_path;
    eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
    eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--split", eval_split, "train | test | all");
    eval_cmd->add_option("--report", eval_report_path, "write JSON report here");

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "run the encoding ablation");
    std::string ablate_data, ablate_report_path, ablate_patch = "1024";
    TrainConfig ac;
    ac.epochs = 10;
    ablate_cmd->add_option("--data", ablate_data, "dataset directory")->required();
    ablate_cmd->add_option("--epochs", ac.epochs, "epochs per configuration");
    ablate_cmd->add_option("--seed", ac.seed, "shared seed across configurations");
    ablate_cmd->add_option("--report", ablate_report_path, "write JSON report here");
    ablate_cmd->add_option("--patch-size", ablate_patch, "1024 | 64 | none");
    ablate_cmd->add_option("--lr", ac.learning_rate, "learning rate");
    ablate_cmd->add_option("--out", ac.checkpoint_dir, "checkpoint directory");
    ablate_cmd->add_option("--workers", ac.workers, "worker threads (0 = auto)");

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "predict one deformation");
    std::string p_rest, p_rigid, p_meta, p_ckpt, p_out;
    predict_cmd->add_option("--rest", p_rest, "rest mesh OBJ/OFF")->required();
    predict_cmd->add_option("--rigid", p_rigid, "rigid mesh OBJ/OFF (contact pose)")->required();
    predict_cmd->add_option("--meta", p_meta, "meta.json with force_dir/force_mag")->required();
    predict_cmd->add_option("--ckpt", p_ckpt, "checkpoint file")->required();
    predict_cmd->add_option("--out", p_out, "output OBJ")->required();

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "runtime benchmark");
    std::string bench_ckpt, bench_data, bench_report_path;
    int bench_batches = 20;
    bench_cmd->add_option("--ckpt", bench_ckpt, "checkpoint file")->required();
    bench_cmd->add_option("--data", bench_data, "dataset directory")->required();
    bench_cmd->add_option("--batches", bench_batches, "number of timed batches");
    bench_cmd->add_option("--report", bench_report_path, "write JSON report here");

    try {
        app.parse(argc, argv);

        if (sim_cmd->parsed()) {
            SimConfig cfg;
            const auto objects = resolve_objects(sim_objects);
            const DatasetManifest manifest =
                generate_dataset(objects, sim_scenarios, sim_seed, sim_out, cfg, sim_workers);
            int written = 0, skipped = 0;
            for (const auto& om : manifest.objects) {
                written += static_cast<int>(om.scenarios.size());
                skipped += static_cast<int>(om.skipped.size());
            }
            std::cout << "wrote " << written << " samples (" << skipped << " skipped) for "
                      << manifest.objects.size() << " objects into " << sim_out << "\n";
        } else if (train_cmd->parsed()) {
            tc.patch_size = parse_patch(train_patch);
            tc.checkpoint_dir = train_out;
            tc.precision = train_precision;
            const TrainScope scope =
                train_scope == "per-object" ? TrainScope::PerObject : TrainScope::AllObjects;
            if (train_scope != "per-object" && train_scope != "all")
                throw std::invalid_argument("scope must be per-object or all");
            TrainResult result = train(tc, train_data, scope,
                                       [](const std::string& line) { std::cout << line << "\n"; });
            for (const auto& net : result.nets)
                std::cout << "net " << net.name << ": final=" << net.final_checkpoint
                          << " best=" << net.best_checkpoint << "\n";
        } else if (eval_cmd->parsed()) {
            EvalOptions opts;
            opts.split = eval_split;
            EvalReport report = evaluate(eval_data, eval_ckpt, opts);
            print_eval(report);
            if (!eval_report_path.empty()) write_eval_report(eval_report_path, report);
        } else if (ablate_cmd->parsed()) {
            ac.patch_size = parse_patch(ablate_patch);
            if (ac.checkpoint_dir == ".") ac.checkpoint_dir = "ablation_checkpoints";
            AblationReport report = run_ablation(
                ablate_data, ac, [](const std::string& line) { std::cout << line << "\n"; });
            for (const auto& row : report.rows)
                std::cout << "  " << row.label << ": mae=" << row.mae << " mse=" << row.mse
                          << "\n";
            std::cout << "  init identical across rows: "
                      << (report.init_bitwise_identical ? "yes" : "no")
                      << "; best mse: " << report.best_mse_label << "\n";
            if (!ablate_report_path.empty()) write_ablation_report(ablate_report_path, report);
        } else if (predict_cmd->parsed()) {
            predict_to_obj(p_rest, p_rigid, p_meta, p_ckpt, p_out);
            std::cout << "wrote " << p_out << "\n";
        } else if (bench_cmd->parsed()) {
            BenchReport report = bench(bench_data, bench_ckpt, bench_batches);
            std::cout << "  size " << report.soft_nodes << ": Data (ms) " << report.data_ms
                      << ", Network (ms) " << report.network_ms << " per batch of "
                      << report.batch_size << " over " << report.batches << " batches\n";
            if (!bench_report_path.empty()) write_bench_report(bench_report_path, report);
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return 0;  // --help
        nlohmann::json err{{"error", {{"type", "cli"}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return e.get_exit_code();
    } catch (const std::exception& e) {
        nlohmann::json err{
            {"error", {{"type", typeid(e).name()}, {"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
}
