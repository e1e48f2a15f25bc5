#include "diffret/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "diffret/errors.hpp"
#include "diffret/rng.hpp"

namespace diffret {

using nlohmann::json;

Strategy parse_strategy(const std::string& name) {
    if (name == "gen") return Strategy::Gen;
    if (name == "dis") return Strategy::Dis;
    if (name == "gen+dis") return Strategy::GenDis;
    throw ConfigError("unknown strategy '" + name + "' (expected gen|dis|gen+dis)");
}

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Gen: return "gen";
        case Strategy::Dis: return "dis";
        default: return "gen+dis";
    }
}

void ExperimentConfig::validate() const {
    train.validate();
    if (dataset_kind != "synthetic" && dataset_kind != "embeddings") {
        throw ConfigError("dataset must be 'synthetic' or 'embeddings'");
    }
    if (dataset_kind == "synthetic") {
        data.validate();
    } else if (embedding_path.empty()) {
        throw ConfigError("embedding_path is required when dataset = embeddings");
    }
    parse_strategy(strategy);
    parse_score_mode(mode);
    if (eval_seeds.empty()) throw ConfigError("eval_seeds must not be empty");
    if (!(fusion_weight >= 0.0)) throw ConfigError("fusion_weight must be >= 0");
    if (stride < 1) throw ConfigError("stride must be >= 1");
    if (k_grid.empty() || batch_grid.empty() || strategy_grid.empty()) {
        throw ConfigError("ablation grids must not be empty");
    }
    for (const auto& s : strategy_grid) parse_strategy(s);
}

namespace {

json config_json(const ExperimentConfig& c) {
    return json{{"dim", c.train.dim},
                {"steps", c.train.steps},
                {"batch_size", c.train.batch_size},
                {"epochs_phase1", c.train.epochs_phase1},
                {"epochs_phase2", c.train.epochs_phase2},
                {"lr_phase1", c.train.lr_phase1},
                {"lr_phase2", c.train.lr_phase2},
                {"tau", c.train.tau},
                {"seed", c.train.seed},
                {"beta_start", c.train.beta_start},
                {"beta_end", c.train.beta_end},
                {"label_smoothing", c.train.label_smoothing},
                {"denoiser_hidden", c.train.denoiser_hidden},
                {"scaled_attention", c.train.scaled_attention},
                {"adam_beta1", c.train.adam_beta1},
                {"adam_beta2", c.train.adam_beta2},
                {"adam_eps", c.train.adam_eps},
                {"n_train", c.data.n_train},
                {"n_test", c.data.n_test},
                {"latent_dim", c.data.latent_dim},
                {"text_dim", c.data.text_dim},
                {"audio_dim", c.data.audio_dim},
                {"noise_std", c.data.noise_std},
                {"shift_degrees", c.data.shift_degrees},
                {"captions_per_item", c.data.captions_per_item},
                {"mix_seed", c.data.mix_seed},
                {"dataset", c.dataset_kind},
                {"embedding_path", c.embedding_path},
                {"strategy", c.strategy},
                {"eval_seeds", c.eval_seeds},
                {"fusion_weight", c.fusion_weight},
                {"mode", c.mode},
                {"stride", c.stride},
                {"out_dir", c.out_dir},
                {"k_grid", c.k_grid},
                {"batch_grid", c.batch_grid},
                {"strategy_grid", c.strategy_grid}};
}

void apply_json(const json& j, ExperimentConfig& c) {
    const json defaults = config_json(c);
    std::vector<std::string> unknown;
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!defaults.contains(key)) unknown.push_back(key);
    }
    if (!unknown.empty()) {
        std::string msg = "unknown config keys:";
        for (const auto& k : unknown) msg += " " + k;
        throw ConfigError(msg);
    }
    auto get = [&j]<typename T>(const char* key, T& dst) {
        if (j.contains(key)) {
            try {
                j.at(key).get_to(dst);
            } catch (const json::exception&) {
                throw ConfigError(std::string("config key '") + key + "' has the wrong type");
            }
        }
    };
    get("dim", c.train.dim);
    get("steps", c.train.steps);
    get("batch_size", c.train.batch_size);
    get("epochs_phase1", c.train.epochs_phase1);
    get("epochs_phase2", c.train.epochs_phase2);
    get("lr_phase1", c.train.lr_phase1);
    get("lr_phase2", c.train.lr_phase2);
    get("tau", c.train.tau);
    get("seed", c.train.seed);
    get("beta_start", c.train.beta_start);
    get("beta_end", c.train.beta_end);
    get("label_smoothing", c.train.label_smoothing);
    get("denoiser_hidden", c.train.denoiser_hidden);
    get("scaled_attention", c.train.scaled_attention);
    get("adam_beta1", c.train.adam_beta1);
    get("adam_beta2", c.train.adam_beta2);
    get("adam_eps", c.train.adam_eps);
    get("n_train", c.data.n_train);
    get("n_test", c.data.n_test);
    get("latent_dim", c.data.latent_dim);
    get("text_dim", c.data.text_dim);
    get("audio_dim", c.data.audio_dim);
    get("noise_std", c.data.noise_std);
    get("shift_degrees", c.data.shift_degrees);
    get("captions_per_item", c.data.captions_per_item);
    get("mix_seed", c.data.mix_seed);
    get("dataset", c.dataset_kind);
    get("embedding_path", c.embedding_path);
    get("strategy", c.strategy);
    get("eval_seeds", c.eval_seeds);
    get("fusion_weight", c.fusion_weight);
    get("mode", c.mode);
    get("stride", c.stride);
    get("out_dir", c.out_dir);
    get("k_grid", c.k_grid);
    get("batch_grid", c.batch_grid);
    get("strategy_grid", c.strategy_grid);
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    ExperimentConfig cfg;
    apply_json(j, cfg);
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return config_from_json_text(buf.str());
}

std::string config_to_json_text(const ExperimentConfig& cfg) { return config_json(cfg).dump(2) + "\n"; }

SyntheticDataset resolve_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset_kind == "embeddings") {
        DatasetSplit loaded = load_embeddings(cfg.embedding_path);
        if (loaded.text_dim != cfg.train.dim) {
            throw ConfigError("embedding width " + std::to_string(loaded.text_dim) +
                              " does not match configured dim " + std::to_string(cfg.train.dim));
        }
        // Pre-encoded pipelines reuse the file for training and in-domain
        // evaluation: the first portion trains, the remainder evaluates.
        SyntheticDataset out;
        const size_t n = loaded.pairs.size();
        const size_t n_eval = std::max<size_t>(1, n / 5);
        const size_t n_train = n - n_eval;
        if (n_train < static_cast<size_t>(cfg.train.batch_size)) {
            throw ConfigError("embedding file too small: " + std::to_string(n) + " pairs");
        }
        out.train = loaded;
        out.train.pairs.assign(loaded.pairs.begin(), loaded.pairs.begin() + static_cast<long>(n_train));
        out.test_source = loaded;
        out.test_source.split = Split::Test;
        out.test_source.pairs.assign(loaded.pairs.begin() + static_cast<long>(n_train),
                                     loaded.pairs.end());
        out.test_target = out.test_source;
        out.test_target.domain = Domain::Target;
        return out;
    }
    return generate_synthetic(cfg.data, cfg.train.seed);
}

TrainOutcome run_training(const ExperimentConfig& cfg, Strategy strategy) {
    cfg.validate();
    const SyntheticDataset dataset = resolve_dataset(cfg);
    const DatasetSplit& train = dataset.train;

    TrainOutcome out;
    out.checkpoint.config = cfg.train;
    out.checkpoint.text_input_dim = train.text_dim;
    out.checkpoint.audio_input_dim = train.audio_dim;
    out.checkpoint.identity_encoders = train.pre_encoded;
    out.checkpoint.schedule = make_schedule(cfg.train.steps, cfg.train.beta_start, cfg.train.beta_end);

    EncoderPair encoders{identity_encoder(cfg.train.dim, Modality::Text),
                         identity_encoder(cfg.train.dim, Modality::Audio)};
    if (!train.pre_encoded) {
        if (strategy == Strategy::Gen) {
            // Generative-only training keeps randomly initialized frozen
            // encoders: phase 1 never runs.
            encoders = EncoderPair{
                init_encoder(train.text_dim, cfg.train.dim, Modality::Text,
                             Rng::derive(cfg.train.seed, 1)),
                init_encoder(train.audio_dim, cfg.train.dim, Modality::Audio,
                             Rng::derive(cfg.train.seed, 2)),
            };
        } else {
            encoders = train_phase1(train, cfg.train, &out.curve);
        }
    }
    out.checkpoint.encoders = encoders;

    if (strategy != Strategy::Dis) {
        out.checkpoint.denoisers = train_phase2(train, encoders, cfg.train, &out.curve);
    }
    return out;
}

namespace {

struct EvalItems {
    // One query per pair item; candidates deduplicated by group for the audio
    // side (multi-caption data shares one audio clip per group).
    std::vector<Candidate> text_candidates;
    std::vector<Candidate> audio_candidates;
    std::vector<std::pair<int64_t, std::vector<double>>> text_queries;   // pair id, embedding
    std::vector<std::pair<int64_t, std::vector<double>>> audio_queries;  // group id, embedding
    TruthMap t2a_truth;  // text query -> audio group
    TruthMap a2t_truth;  // audio group -> caption pair ids
};

EvalItems prepare_eval(const Checkpoint& ckpt, const DatasetSplit& split) {
    EncoderPair enc{identity_encoder(ckpt.config.dim, Modality::Text),
                    identity_encoder(ckpt.config.dim, Modality::Audio)};
    if (ckpt.encoders && !ckpt.encoders->text.identity) enc = *ckpt.encoders;
    const auto text_emb = embed_all(split, enc.text, Modality::Text);
    const auto audio_emb = embed_all(split, enc.audio, Modality::Audio);

    EvalItems items;
    std::set<int64_t> seen_groups;
    for (size_t i = 0; i < split.pairs.size(); ++i) {
        const auto& pair = split.pairs[i];
        items.text_candidates.push_back({pair.pair_id, text_emb[i]});
        items.text_queries.emplace_back(pair.pair_id, text_emb[i]);
        items.t2a_truth[pair.pair_id] = {pair.group};
        items.a2t_truth[pair.group].insert(pair.pair_id);
        if (seen_groups.insert(pair.group).second) {
            items.audio_candidates.push_back({pair.group, audio_emb[i]});
            items.audio_queries.emplace_back(pair.group, audio_emb[i]);
        }
    }
    return items;
}

}  // namespace

std::vector<EvalReport> run_eval(const Checkpoint& ckpt, const DatasetSplit& eval_split,
                                 ScoreMode mode, const std::vector<uint64_t>& seeds,
                                 double fusion_weight, int64_t stride) {
    const EvalItems items = prepare_eval(ckpt, eval_split);
    std::vector<EvalReport> reports;
    for (const Direction dir : {Direction::TextToAudio, Direction::AudioToText}) {
        EvalReport rep;
        rep.direction = dir;
        rep.mode = mode;
        rep.seeds = seeds;
        const auto& queries =
            dir == Direction::TextToAudio ? items.text_queries : items.audio_queries;
        const auto& cands =
            dir == Direction::TextToAudio ? items.audio_candidates : items.text_candidates;
        const auto& truth = dir == Direction::TextToAudio ? items.t2a_truth : items.a2t_truth;
        for (const uint64_t seed : seeds) {
            std::vector<RetrievalResult> results;
            results.reserve(queries.size());
            for (const auto& [qid, emb] : queries) {
                results.push_back(
                    score(qid, emb, cands, mode, ckpt, dir, fusion_weight, seed, stride));
            }
            std::array<double, 3> row{};
            const int64_t ks[3] = {1, 5, 10};
            for (int m = 0; m < 3; ++m) {
                const int64_t k = std::min<int64_t>(ks[m], static_cast<int64_t>(cands.size()));
                row[static_cast<size_t>(m)] = recall_at_k(results, truth, k);
            }
            rep.per_seed.push_back(row);
        }
        rep.finalize();
        reports.push_back(std::move(rep));
    }
    return reports;
}

namespace {

ScoreMode mode_for_strategy(Strategy s) {
    switch (s) {
        case Strategy::Gen: return ScoreMode::Gen;
        case Strategy::Dis: return ScoreMode::Dis;
        default: return ScoreMode::Fused;
    }
}

}  // namespace

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg, const std::string& grid_kind,
                                      bool out_of_domain) {
    cfg.validate();
    struct Point {
        std::string value;
        ExperimentConfig cfg;
        Strategy strategy;
        ScoreMode mode;
    };
    std::vector<Point> points;
    if (grid_kind == "strategy") {
        for (const auto& name : cfg.strategy_grid) {
            const Strategy s = parse_strategy(name);
            points.push_back({name, cfg, s, mode_for_strategy(s)});
        }
    } else if (grid_kind == "steps") {
        for (const auto k : cfg.k_grid) {
            Point p{std::to_string(k), cfg, parse_strategy(cfg.strategy),
                    parse_score_mode(cfg.mode)};
            p.cfg.train.steps = k;
            points.push_back(std::move(p));
        }
    } else if (grid_kind == "batch_size") {
        for (const auto b : cfg.batch_grid) {
            Point p{std::to_string(b), cfg, parse_strategy(cfg.strategy),
                    parse_score_mode(cfg.mode)};
            p.cfg.train.batch_size = b;
            points.push_back(std::move(p));
        }
    } else {
        throw ConfigError("unknown ablation grid '" + grid_kind +
                          "' (expected strategy|steps|batch_size)");
    }
    if (points.empty()) throw ConfigError("ablation grid is empty");

    std::vector<AblationRow> rows;
    for (const auto& point : points) {
        std::map<Direction, EvalReport> merged;
        for (const uint64_t seed : cfg.eval_seeds) {
            ExperimentConfig run_cfg = point.cfg;
            run_cfg.train.seed = seed;
            const TrainOutcome trained = run_training(run_cfg, point.strategy);
            const SyntheticDataset dataset = resolve_dataset(run_cfg);
            const DatasetSplit& split = out_of_domain ? dataset.test_target : dataset.test_source;
            const auto reports = run_eval(trained.checkpoint, split, point.mode,
                                          {Rng::derive(seed, 99)}, cfg.fusion_weight, cfg.stride);
            for (const auto& rep : reports) {
                auto& dst = merged[rep.direction];
                dst.direction = rep.direction;
                dst.mode = rep.mode;
                dst.seeds.push_back(seed);
                dst.per_seed.push_back(rep.per_seed.front());
            }
        }
        for (auto& [dir, rep] : merged) {
            rep.finalize();
            rows.push_back({grid_kind, point.value, dir, rep.mode, rep.mean, rep.stddev});
        }
    }
    return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << "grid,value,direction,mode,r1_mean,r1_std,r5_mean,r5_std,r10_mean,r10_std\n";
    char line[220];
    for (const auto& row : rows) {
        std::snprintf(line, sizeof(line), "%s,%s,%s,%s,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n",
                      row.grid_kind.c_str(), row.grid_value.c_str(), direction_name(row.direction),
                      score_mode_name(row.mode), row.mean[0], row.stddev[0], row.mean[1],
                      row.stddev[1], row.mean[2], row.stddev[2]);
        out << line;
    }
    return out.str();
}

}  // namespace diffret
