#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "diffret/checkpoint.hpp"
#include "diffret/diffusion.hpp"
#include "diffret/encoders.hpp"
#include "diffret/errors.hpp"
#include "diffret/experiment.hpp"
#include "diffret/retrieval.hpp"
#include "diffret/trainer.hpp"

namespace py = pybind11;
using namespace diffret;

namespace {

using Vec = std::vector<double>;
using Mat = std::vector<std::vector<double>>;

Tensor to_matrix(const Mat& rows, const char* what) {
    if (rows.empty()) throw ContractError(std::string(what) + ": empty matrix");
    const auto cols = static_cast<int64_t>(rows.front().size());
    std::vector<double> flat;
    flat.reserve(rows.size() * rows.front().size());
    for (const auto& r : rows) {
        if (static_cast<int64_t>(r.size()) != cols) {
            throw ContractError(std::string(what) + ": ragged matrix");
        }
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return Tensor::from({static_cast<int64_t>(rows.size()), cols}, std::move(flat));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "diffret core: diffusion-based generative retrieval over paired embeddings";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);

    py::class_<DiffusionSchedule>(m, "DiffusionSchedule")
        .def_readonly("steps", &DiffusionSchedule::steps)
        .def_readonly("beta", &DiffusionSchedule::beta)
        .def_readonly("alpha", &DiffusionSchedule::alpha)
        .def_readonly("alpha_bar", &DiffusionSchedule::alpha_bar)
        .def("alpha_bar_at", &DiffusionSchedule::alpha_bar_at);

    m.def("make_schedule", &make_schedule, py::arg("steps"), py::arg("beta_start") = 1e-4,
          py::arg("beta_end") = 0.02);

    m.def(
        "q_sample",
        [](const Vec& x0, int64_t k, const Vec& noise, const DiffusionSchedule& schedule) {
            return q_sample({x0, 0}, k, noise, schedule).values;
        },
        py::arg("x0"), py::arg("k"), py::arg("noise"), py::arg("schedule"));

    m.def(
        "ddim_step",
        [](const Vec& x_k, const Vec& x0_hat, int64_t k, const DiffusionSchedule& schedule) {
            return ddim_step({x_k, k}, x0_hat, k, schedule).values;
        },
        py::arg("x_k"), py::arg("x0_hat"), py::arg("k"), py::arg("schedule"));

    m.def(
        "noise_embedding",
        [](int64_t k, int64_t dim) {
            const Tensor t = noise_embedding(k, dim);
            return Vec(t.data().begin(), t.data().end());
        },
        py::arg("k"), py::arg("dim"));

    m.def("cosine_similarity",
          [](const Vec& a, const Vec& b) { return cosine_similarity(a, b); });

    m.def(
        "contrastive_loss",
        [](const Mat& text, const Mat& audio, double tau) {
            return contrastive_loss(to_matrix(text, "text"), to_matrix(audio, "audio"), tau).item();
        },
        py::arg("text"), py::arg("audio"), py::arg("tau") = 0.07);

    m.def(
        "kl_loss",
        [](const Vec& x0_hat, const Vec& x0, double eps_ls) {
            return kl_loss(Tensor::from({static_cast<int64_t>(x0_hat.size())}, x0_hat),
                           Tensor::from({static_cast<int64_t>(x0.size())}, x0), eps_ls)
                .item();
        },
        py::arg("x0_hat"), py::arg("x0"), py::arg("eps_ls") = 0.0);

    py::class_<Checkpoint>(m, "Checkpoint")
        .def_property_readonly("dim", [](const Checkpoint& c) { return c.config.dim; })
        .def_property_readonly("steps", [](const Checkpoint& c) { return c.config.steps; })
        .def_property_readonly("has_denoisers",
                               [](const Checkpoint& c) { return c.denoisers.has_value(); })
        .def_property_readonly("has_encoders",
                               [](const Checkpoint& c) { return c.encoders.has_value(); });

    m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
    m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("checkpoint"));

    m.def(
        "train",
        [](const std::string& config_json) {
            const ExperimentConfig cfg = config_from_json_text(config_json);
            return run_training(cfg, parse_strategy(cfg.strategy)).checkpoint;
        },
        py::arg("config_json"), "Run the configured training strategy and return the checkpoint");

    m.def(
        "generate",
        [](const Checkpoint& ckpt, const Vec& query, const Mat& candidates,
           const std::string& direction, uint64_t seed, int64_t stride) {
            if (!ckpt.denoisers) throw ConfigError("checkpoint has no denoiser");
            const auto& den = direction == "a2t" ? ckpt.denoisers->a2t : ckpt.denoisers->t2a;
            const Tensor q = Tensor::from({static_cast<int64_t>(query.size())}, query);
            return generate(q, to_matrix(candidates, "candidates"), den, ckpt.schedule, seed,
                            stride)
                .values;
        },
        py::arg("checkpoint"), py::arg("query"), py::arg("candidates"),
        py::arg("direction") = "t2a", py::arg("seed") = 1, py::arg("stride") = 1);

    m.def(
        "score",
        [](const Checkpoint& ckpt, const Vec& query, const Mat& candidates,
           const std::string& mode, const std::string& direction, double fusion_weight,
           uint64_t seed) {
            std::vector<Candidate> cands;
            for (size_t i = 0; i < candidates.size(); ++i) {
                cands.push_back({static_cast<int64_t>(i), candidates[i]});
            }
            const auto dir =
                direction == "a2t" ? Direction::AudioToText : Direction::TextToAudio;
            const auto res =
                score(0, query, cands, parse_score_mode(mode), ckpt, dir, fusion_weight, seed);
            py::list out;
            for (const auto& c : res.ranked) {
                out.append(py::make_tuple(c.candidate_id, c.dis, c.gen, c.fused));
            }
            return out;
        },
        py::arg("checkpoint"), py::arg("query"), py::arg("candidates"), py::arg("mode") = "fused",
        py::arg("direction") = "t2a", py::arg("fusion_weight") = 1.0, py::arg("seed") = 1,
        "Rank candidates for one query; returns (candidate, dis, gen, fused) tuples");

    m.def("default_config_json", [] { return config_to_json_text(ExperimentConfig{}); });

    m.def(
        "generate_synthetic",
        [](const std::string& config_json, uint64_t seed) {
            const ExperimentConfig cfg = config_from_json_text(config_json);
            const SyntheticDataset data = generate_synthetic(cfg.data, seed);
            auto split_dict = [](const DatasetSplit& s) {
                py::dict d;
                py::list text, audio, ids, groups;
                for (const auto& p : s.pairs) {
                    ids.append(p.pair_id);
                    groups.append(p.group);
                    text.append(p.text);
                    audio.append(p.audio);
                }
                d["pair_id"] = ids;
                d["group"] = groups;
                d["text"] = text;
                d["audio"] = audio;
                return d;
            };
            py::dict out;
            out["train"] = split_dict(data.train);
            out["test_source"] = split_dict(data.test_source);
            out["test_target"] = split_dict(data.test_target);
            return out;
        },
        py::arg("config_json"), py::arg("seed") = 1);
}
