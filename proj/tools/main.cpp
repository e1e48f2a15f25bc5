#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "diffret/checkpoint.hpp"
#include "diffret/errors.hpp"
#include "diffret/experiment.hpp"
#include "diffret/retrieval.hpp"
#include "diffret/rng.hpp"

namespace fs = std::filesystem;
using namespace diffret;

namespace {

struct CommonFlags {
    std::string config_path;
    std::string checkpoint_path;
    std::optional<std::string> mode;
    std::optional<std::string> seeds;
    std::optional<std::string> out_dir;
    std::optional<double> fusion_weight;
    std::optional<int64_t> steps;
    std::optional<int64_t> stride;
};

std::vector<uint64_t> parse_seeds(const std::string& text) {
    std::vector<uint64_t> seeds;
    std::string cur;
    for (char ch : text + ",") {
        if (ch == ',') {
            if (!cur.empty()) {
                try {
                    seeds.push_back(std::stoull(cur));
                } catch (const std::exception&) {
                    throw ConfigError("bad seed value '" + cur + "'");
                }
                cur.clear();
            }
        } else {
            cur.push_back(ch);
        }
    }
    if (seeds.empty()) throw ConfigError("--seeds must list at least one seed");
    return seeds;
}

ExperimentConfig resolve_config(const CommonFlags& flags) {
    ExperimentConfig cfg;
    if (!flags.config_path.empty()) cfg = load_config(flags.config_path);
    if (flags.mode) cfg.mode = *flags.mode;
    if (flags.seeds) cfg.eval_seeds = parse_seeds(*flags.seeds);
    if (flags.out_dir) cfg.out_dir = *flags.out_dir;
    if (flags.fusion_weight) cfg.fusion_weight = *flags.fusion_weight;
    if (flags.steps) cfg.train.steps = *flags.steps;
    if (flags.stride) cfg.stride = *flags.stride;
    cfg.validate();
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

fs::path prepare_out_dir(const ExperimentConfig& cfg) {
    fs::path dir(cfg.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    write_text(dir / "config.resolved.json", config_to_json_text(cfg));
    return dir;
}

int cmd_train(const CommonFlags& flags) {
    const ExperimentConfig cfg = resolve_config(flags);
    const fs::path dir = prepare_out_dir(cfg);
    const TrainOutcome outcome = run_training(cfg, parse_strategy(cfg.strategy));
    save_checkpoint((dir / "checkpoint.dfat").string(), outcome.checkpoint);
    append_loss_csv((dir / "losses.csv").string(), outcome.curve);
    std::cout << "checkpoint: " << (dir / "checkpoint.dfat").string() << "\n";
    std::cout << "loss curve: " << (dir / "losses.csv").string() << "\n";
    return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& domain) {
    const ExperimentConfig cfg = resolve_config(flags);
    if (flags.checkpoint_path.empty()) throw ConfigError("--checkpoint is required for eval");
    const Checkpoint ckpt = load_checkpoint(flags.checkpoint_path);
    const SyntheticDataset dataset = resolve_dataset(cfg);
    const DatasetSplit& split = domain == "target" ? dataset.test_target : dataset.test_source;
    const auto reports = run_eval(ckpt, split, parse_score_mode(cfg.mode), cfg.eval_seeds,
                                  cfg.fusion_weight, cfg.stride);
    const fs::path dir = prepare_out_dir(cfg);
    const std::string name = std::string("eval_") + cfg.mode + "_" + domain + ".csv";
    write_text(dir / name, report_csv(reports));
    std::cout << report_table(reports);
    std::cout << "report: " << (dir / name).string() << "\n";
    return 0;
}

int cmd_ablate(const CommonFlags& flags, const std::string& grid, bool out_of_domain) {
    const ExperimentConfig cfg = resolve_config(flags);
    std::vector<std::string> kinds;
    if (grid == "all") {
        kinds = {"strategy", "steps", "batch_size"};
    } else {
        kinds = {grid};
    }
    std::vector<AblationRow> rows;
    for (const auto& kind : kinds) {
        const auto part = run_ablation(cfg, kind, out_of_domain);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    const fs::path dir = prepare_out_dir(cfg);
    write_text(dir / "ablation.csv", ablation_csv(rows));
    std::cout << ablation_csv(rows);
    std::cout << "report: " << (dir / "ablation.csv").string() << "\n";
    return 0;
}

int cmd_visualize(const CommonFlags& flags, int64_t query_id, uint64_t seed) {
    const ExperimentConfig cfg = resolve_config(flags);
    if (flags.checkpoint_path.empty()) throw ConfigError("--checkpoint is required for visualize");
    const Checkpoint ckpt = load_checkpoint(flags.checkpoint_path);
    if (!ckpt.denoisers) throw ConfigError("checkpoint has no denoiser; nothing to visualize");
    const SyntheticDataset dataset = resolve_dataset(cfg);
    const DatasetSplit& split = dataset.test_source;

    EncoderPair enc{identity_encoder(ckpt.config.dim, Modality::Text),
                    identity_encoder(ckpt.config.dim, Modality::Audio)};
    if (ckpt.encoders && !ckpt.encoders->text.identity) enc = *ckpt.encoders;
    const auto text_emb = embed_all(split, enc.text, Modality::Text);
    const auto audio_emb = embed_all(split, enc.audio, Modality::Audio);

    std::optional<size_t> query_index;
    for (size_t i = 0; i < split.pairs.size(); ++i) {
        if (split.pairs[i].pair_id == query_id) {
            query_index = i;
            break;
        }
    }
    if (!query_index) {
        throw ConfigError("unknown query id " + std::to_string(query_id) +
                          " (not in the evaluation split)");
    }

    std::vector<int64_t> candidate_ids;
    std::vector<double> flat;
    std::vector<double> init_noise;
    for (size_t i = 0; i < split.pairs.size(); ++i) {
        if (i > 0 && split.pairs[i].group == split.pairs[i - 1].group) continue;  // dedupe audio
        candidate_ids.push_back(split.pairs[i].group);
        flat.insert(flat.end(), audio_emb[i].begin(), audio_emb[i].end());
        Rng cand_rng(Rng::derive(Rng::derive(seed, static_cast<uint64_t>(query_id)),
                                 static_cast<uint64_t>(split.pairs[i].group)));
        init_noise.push_back(cand_rng.normal());
    }
    const auto n = static_cast<int64_t>(candidate_ids.size());
    const Tensor cands = Tensor::from({n, ckpt.config.dim}, std::move(flat));
    const Tensor query = Tensor::from({ckpt.config.dim}, text_emb[*query_index]);

    std::vector<TrajectoryPoint> trace;
    generate(query, cands, ckpt.denoisers->t2a, ckpt.schedule, seed, cfg.stride, &trace,
             init_noise);

    const fs::path dir = prepare_out_dir(cfg);
    export_trajectory(trace, candidate_ids, (dir / "trajectory.csv").string());
    export_trajectory_svg(trace, candidate_ids, split.pairs[*query_index].group,
                          (dir / "trajectory.svg").string());
    std::cout << "trajectory: " << (dir / "trajectory.csv").string() << "\n";
    std::cout << "plot: " << (dir / "trajectory.svg").string() << "\n";
    return 0;
}

int cmd_gen_data(const CommonFlags& flags, const std::string& format) {
    const ExperimentConfig cfg = resolve_config(flags);
    const SyntheticDataset dataset = resolve_dataset(cfg);
    const fs::path dir = prepare_out_dir(cfg);
    if (format == "csv") {
        save_dataset_csv((dir / "train.csv").string(), dataset.train);
        save_dataset_csv((dir / "test_source.csv").string(), dataset.test_source);
        save_dataset_csv((dir / "test_target.csv").string(), dataset.test_target);
        std::cout << "wrote train.csv, test_source.csv, test_target.csv under " << dir.string()
                  << "\n";
    } else if (format == "dfem") {
        save_embeddings((dir / "train.dfem").string(), dataset.train);
        save_embeddings((dir / "test_source.dfem").string(), dataset.test_source);
        save_embeddings((dir / "test_target.dfem").string(), dataset.test_target);
        std::cout << "wrote train.dfem, test_source.dfem, test_target.dfem under " << dir.string()
                  << "\n";
    } else {
        throw ConfigError("unknown gen-data format '" + format + "' (expected csv|dfem)");
    }
    return 0;
}

int cmd_defaults() {
    std::cout << config_to_json_text(ExperimentConfig{});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"diffret: generative diffusion retrieval over paired-modality embeddings"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string eval_domain = "source";
    std::string ablate_grid = "all";
    bool ablate_ood = false;
    int64_t viz_query = 0;
    uint64_t viz_seed = 1;
    std::string gen_format = "csv";

    auto add_common = [&flags](CLI::App* cmd) {
        cmd->add_option("--config", flags.config_path, "JSON config file");
        cmd->add_option("--checkpoint", flags.checkpoint_path, "checkpoint file");
        cmd->add_option("--mode", [&flags](const std::vector<std::string>& v) {
            flags.mode = v.front();
            return true;
        }, "scoring mode: dis|gen|fused");
        cmd->add_option("--seeds", [&flags](const std::vector<std::string>& v) {
            flags.seeds = v.front();
            return true;
        }, "comma-separated seed list");
        cmd->add_option("--out-dir", [&flags](const std::vector<std::string>& v) {
            flags.out_dir = v.front();
            return true;
        }, "output directory");
        cmd->add_option("--fusion-weight", [&flags](const std::vector<std::string>& v) {
            flags.fusion_weight = std::stod(v.front());
            return true;
        }, "weight of the generative score in fused mode");
        cmd->add_option("--steps", [&flags](const std::vector<std::string>& v) {
            flags.steps = std::stoll(v.front());
            return true;
        }, "diffusion steps K");
        cmd->add_option("--stride", [&flags](const std::vector<std::string>& v) {
            flags.stride = std::stoll(v.front());
            return true;
        }, "reverse-process stride");
    };

    auto* train = app.add_subcommand("train", "two-phase training; writes checkpoint and loss curve");
    add_common(train);
    auto* eval = app.add_subcommand("eval", "R@1/5/10 for both directions under a scoring mode");
    add_common(eval);
    eval->add_option("--domain", eval_domain, "evaluation split: source|target");
    auto* ablate = app.add_subcommand("ablate", "grid runs over strategy / steps / batch size");
    add_common(ablate);
    ablate->add_option("--grid", ablate_grid, "strategy|steps|batch_size|all");
    ablate->add_flag("--out-of-domain", ablate_ood, "evaluate each grid point on the shifted domain");
    auto* viz = app.add_subcommand("visualize", "export the reverse-process trajectory of one query");
    add_common(viz);
    viz->add_option("--query", viz_query, "query pair id");
    viz->add_option("--seed", viz_seed, "generator noise seed");
    auto* gen = app.add_subcommand("gen-data", "write the synthetic dataset to disk");
    add_common(gen);
    gen->add_option("--format", gen_format, "csv|dfem");
    app.add_subcommand("defaults", "print the default config as JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("train")) return cmd_train(flags);
        if (app.got_subcommand("eval")) return cmd_eval(flags, eval_domain);
        if (app.got_subcommand("ablate")) return cmd_ablate(flags, ablate_grid, ablate_ood);
        if (app.got_subcommand("visualize")) return cmd_visualize(flags, viz_query, viz_seed);
        if (app.got_subcommand("gen-data")) return cmd_gen_data(flags, gen_format);
        if (app.got_subcommand("defaults")) return cmd_defaults();
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
