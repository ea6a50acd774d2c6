// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0
//
// Python surface: the analytic oracles, the identity-check battery, and the
// training entry points, mirroring the CLI.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "distar/checkpoint.hpp"
#include "distar/config.hpp"
#include "distar/verify.hpp"

namespace py = pybind11;
using namespace distar;

namespace {

Array array_from_numpy(py::array_t<double, py::array::c_style | py::array::forcecast> a) {
    Shape shape;
    for (py::ssize_t i = 0; i < a.ndim(); ++i)
        shape.push_back(static_cast<int>(a.shape(i)));
    std::vector<double> data(a.data(), a.data() + a.size());
    return Array(std::move(shape), std::move(data));
}

py::array_t<double> numpy_from_array(const Array& a) {
    std::vector<py::ssize_t> shape(a.shape().begin(), a.shape().end());
    py::array_t<double> out(shape);
    std::copy(a.values().begin(), a.values().end(), out.mutable_data());
    return out;
}

GaussianMixture gmm_from_text(const std::string& text) {
    std::istringstream is(text);
    return parse_gmm(is);
}

}  // namespace

PYBIND11_MODULE(_distar, m) {
    m.doc() = "desk-scale one-step generator distillation and reward alignment";
    m.attr("__version__") = "0.1.0";

    m.def("parse_gmm", [](const std::string& text) {
        GaussianMixture g = gmm_from_text(text);
        return format_gmm(g);  // validated, normalized echo
    },
          py::arg("text"), "Validate a mixture spec and return its normalized echo.");

    m.def("gmm_score",
          [](const std::string& gmm_text, py::array_t<double> x, std::optional<double> t) {
              GaussianMixture g = gmm_from_text(gmm_text);
              if (t) g = diffused_gmm(g, ForwardProcess::edm(), *t);
              Array xs = array_from_numpy(x);
              const int n = xs.rows(), d = xs.cols();
              Array out(Shape{n, d});
              std::vector<double> row(static_cast<std::size_t>(d));
              PreparedMixture pm(g);
              for (int i = 0; i < n; ++i) {
                  pm.score(xs.row(i), row);
                  for (int j = 0; j < d; ++j)
                      out[static_cast<std::size_t>(i) * d + j] = row[static_cast<std::size_t>(j)];
              }
              return numpy_from_array(out);
          },
          py::arg("gmm"), py::arg("x"), py::arg("t") = std::nullopt,
          "Closed-form mixture score, optionally of the edm-diffused marginal at t.");

    m.def("gmm_log_density",
          [](const std::string& gmm_text, py::array_t<double> x, std::optional<double> t) {
              GaussianMixture g = gmm_from_text(gmm_text);
              if (t) g = diffused_gmm(g, ForwardProcess::edm(), *t);
              Array xs = array_from_numpy(x);
              PreparedMixture pm(g);
              Array out(Shape{xs.rows()});
              for (int i = 0; i < xs.rows(); ++i)
                  out[static_cast<std::size_t>(i)] = pm.log_density(xs.row(i));
              return numpy_from_array(out);
          },
          py::arg("gmm"), py::arg("x"), py::arg("t") = std::nullopt);

    m.def("energy_distance",
          [](py::array_t<double> a, py::array_t<double> b) {
              return energy_distance(array_from_numpy(a), array_from_numpy(b));
          },
          py::arg("a"), py::arg("b"),
          "Two-sample energy distance between row batches.");

    m.def("divergence",
          [](const std::string& p_mean_b, double sigma_init, const std::string& gmm_text,
             const std::string& distance, int n_mc, std::uint64_t seed) {
              std::istringstream is(p_mean_b);
              std::vector<double> b;
              double v;
              while (is >> v) b.push_back(v);
              AffineGenerator p = AffineGenerator::isotropic(b, sigma_init);
              GaussianMixture q = gmm_from_text(gmm_text);
              auto grid = geometric_time_grid(0.05, 20.0, 64);
              Rng rng(seed);
              auto res = divergence_oracle(
                  p, q, ForwardProcess::edm(0.05, 20.0),
                  distance == "squared-l2" ? DistanceFunction::squared_l2()
                                           : DistanceFunction::pseudo_huber(0.1),
                  WeightingFunction::constant(), grid, n_mc, rng);
              py::dict out;
              out["value"] = res.value;
              out["exact"] = res.exact;
              out["mc_fallback"] = res.mc_fallback;
              return out;
          },
          py::arg("generator_mean"), py::arg("sigma_init"), py::arg("gmm"),
          py::arg("distance") = "squared-l2", py::arg("n_mc") = 20000,
          py::arg("seed") = 0,
          "Time-integral score divergence between an isotropic affine generator "
          "pushforward and a mixture reference.");

    m.def("verify_battery",
          [](std::uint64_t seed, bool negative_controls, bool quick) {
              auto reports = run_battery(seed, negative_controls, quick);
              py::list out;
              for (const auto& r : reports) {
                  py::dict d;
                  d["name"] = r.name;
                  d["estimate"] = r.estimate;
                  d["oracle"] = r.oracle;
                  d["tolerance"] = r.tolerance;
                  d["se"] = r.se;
                  d["mc_zero"] = r.mc_zero;
                  d["pass"] = r.pass;
                  d["n"] = r.n;
                  d["note"] = r.note;
                  out.append(std::move(d));
              }
              return out;
          },
          py::arg("seed") = 0, py::arg("negative_controls") = false,
          py::arg("quick") = false, "Run the identity-check battery.");

    m.def("run_align",
          [](const std::string& config_text, const std::string& out_dir) {
              RunConfig cfg = RunConfig::parse_text(config_text);
              std::unique_ptr<ReferenceScore> ref;
              std::unique_ptr<ScoreModel> warm;
              int n_classes = 0;
              if (cfg.reference_kind == "analytic") {
                  if (cfg.reference_gmm.empty())
                      throw config_error("config: missing required key 'reference.gmm'");
                  GaussianMixture gmm = load_gmm(cfg.reference_gmm);
                  n_classes = static_cast<int>(gmm.distinct_labels().size());
                  ref = std::make_unique<AnalyticReference>(std::move(gmm), cfg.process());
              } else {
                  auto model = std::make_shared<ScoreModel>(
                      load_score_model(cfg.reference_checkpoint));
                  n_classes = model->n_classes();
                  warm = std::make_unique<ScoreModel>(*model);
                  ref = std::make_unique<ModelReference>(model);
              }
              AlignmentConfig acfg = cfg.alignment(n_classes);
              if (warm) acfg.assistant_warmup = 0;
              TrainState st = make_train_state(acfg, warm.get());
              RunIo io = cfg.io(out_dir);
              io.config_echo["version"] = "0.1.0";
              io.config_echo["seed"] = cfg.seed;
              io.config_echo["config_hash"] = cfg.config_hash();
              io.config_echo["n_classes"] = n_classes;
              io.config_echo["config"] = cfg.resolved_text();
              RunResult res = run(st, acfg, *ref, io);
              py::dict out;
              out["iterations"] = static_cast<long>(res.metrics.size());
              out["final_energy_distance"] = res.final_energy_distance;
              out["final_reward_mean"] = res.final_reward_mean;
              out["final_mode_fraction"] = res.final_mode_fraction;
              return out;
          },
          py::arg("config"), py::arg("out_dir") = "",
          "Run the alternating distillation/alignment loop from a config text.");

    m.def("sample_checkpoint",
          [](const std::string& path, int n, int cls, std::uint64_t seed) {
              Checkpoint ck = Checkpoint::load(path);
              if (!ck.meta.contains("config"))
                  throw config_error("checkpoint has no embedded config");
              RunConfig cfg = RunConfig::parse_text(ck.meta.at("config").get<std::string>());
              const int n_classes = ck.meta.value("n_classes", 0);
              TrainState st = load_state(cfg.alignment(n_classes), path);
              Rng rng(seed);
              auto doc = sample_dump(st.gen, n, cls, rng);
              Array out(Shape{n, st.gen.data_dim()});
              for (int i = 0; i < n; ++i)
                  for (int j = 0; j < st.gen.data_dim(); ++j)
                      out[static_cast<std::size_t>(i) * st.gen.data_dim() + j] =
                          doc["samples"][static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]
                              .get<double>();
              return numpy_from_array(out);
          },
          py::arg("checkpoint"), py::arg("n") = 512, py::arg("cls") = -1,
          py::arg("seed") = 0, "Draw generator samples from an align checkpoint.");
}
