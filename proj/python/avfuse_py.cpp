// Copyright 2026 The avfuse Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "avfuse/audio_dsp.hpp"
#include "avfuse/decode_score.hpp"
#include "avfuse/errors.hpp"
#include "avfuse/fusion.hpp"
#include "avfuse/harness.hpp"
#include "avfuse/integration_net.hpp"
#include "avfuse/reliability.hpp"

namespace py = pybind11;
using namespace avfuse;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

FeatureMatrix to_matrix(const Array& a) {
  if (a.ndim() == 1) {
    return FeatureMatrix(1, static_cast<std::size_t>(a.shape(0)),
                         std::vector<double>(a.data(), a.data() + a.size()));
  }
  if (a.ndim() != 2) throw DimensionError("expected a 1-D or 2-D array");
  return FeatureMatrix(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
                       std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const FeatureMatrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

std::vector<double> to_vector(const Array& a) { return {a.data(), a.data() + a.size()}; }

StreamBundle bundle_of(const Array& a, const Array& va, const Array& vs) {
  return StreamBundle(validate_posteriors(to_matrix(a)), validate_posteriors(to_matrix(va)),
                      validate_posteriors(to_matrix(vs)));
}

TargetAlignment targets_of(const std::vector<int>& y, std::size_t states) {
  return TargetAlignment(y, states);
}

StreamWeights weights_of(const Array& w, std::size_t frames) {
  if (w.ndim() == 1 && w.shape(0) == 3) {
    return StreamWeights::Constant(frames, {w.data()[0], w.data()[1], w.data()[2]});
  }
  return StreamWeights(to_matrix(w));
}

FusedPosteriors fused_of(const Array& p) {
  return FusedPosteriors::FromProbs(validate_posteriors(to_matrix(p)).probs());
}

}  // namespace

PYBIND11_MODULE(_avfuse, m) {
  m.doc() = "Dynamic stream weighting for audio-visual speech recognition.";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  static py::exception<ConfigError> config_error(m, "ConfigError", base.ptr());
  static py::exception<DataError> data_error(m, "DataError", base.ptr());
  static py::exception<NumericalError> numerical_error(m, "NumericalError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const DataError& e) {
      py::set_error(data_error, e.what());
    } catch (const NumericalError& e) {
      py::set_error(numerical_error, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.attr("RELIABILITY_DIM") = kReliabilityDim;
  m.attr("DEFAULT_NET_DIMS") = kDefaultNetDims;

  // Reliability measures on single distributions.
  m.def("entropy", [](const Array& p) { return entropy(to_vector(p)); }, py::arg("p"));
  m.def("dispersion", [](const Array& p, std::size_t k) { return dispersion(to_vector(p), k); },
        py::arg("p"), py::arg("k"));
  m.def("posterior_difference",
        [](const Array& p, std::size_t k) { return posterior_difference(to_vector(p), k); },
        py::arg("p"), py::arg("k"));
  m.def("kl_divergence",
        [](const Array& p, const Array& q) { return kl_divergence(to_vector(p), to_vector(q)); },
        py::arg("p"), py::arg("q"));
  m.def(
      "model_based_reliability",
      [](const Array& a, const Array& va, const Array& vs, std::size_t top_k, bool clamp_k) {
        ReliabilityConfig cfg;
        cfg.top_k = top_k;
        cfg.clamp_k = clamp_k;
        return to_array(model_based_reliability(bundle_of(a, va, vs), cfg));
      },
      py::arg("a"), py::arg("va"), py::arg("vs"), py::arg("top_k") = 15, py::arg("clamp_k") = false);

  // Fusion and losses.
  m.def(
      "fuse",
      [](const Array& a, const Array& va, const Array& vs, const Array& weights) {
        const StreamBundle b = bundle_of(a, va, vs);
        return to_array(fuse(b, weights_of(weights, b.frames())).probs());
      },
      py::arg("a"), py::arg("va"), py::arg("vs"), py::arg("weights"),
      "Log-linear fusion; `weights` is T x 3 or a single triple.");
  m.def(
      "loss",
      [](const Array& fused, const std::vector<int>& targets, const std::string& name,
         std::optional<Array> gamma) {
        const auto f = fused_of(fused);
        const FeatureMatrix g = gamma ? to_matrix(*gamma) : FeatureMatrix();
        return loss_value(f, targets_of(targets, f.states()), parse_loss(name),
                          gamma ? &g : nullptr);
      },
      py::arg("fused"), py::arg("targets"), py::arg("loss") = "ce", py::arg("gamma") = py::none());
  m.def(
      "loss_grad_weights",
      [](const Array& a, const Array& va, const Array& vs, const Array& weights,
         const std::vector<int>& targets, const std::string& name, std::optional<Array> gamma) {
        const StreamBundle b = bundle_of(a, va, vs);
        const FeatureMatrix g = gamma ? to_matrix(*gamma) : FeatureMatrix();
        return to_array(loss_grad_weights(b, weights_of(weights, b.frames()),
                                          targets_of(targets, b.states()), parse_loss(name),
                                          gamma ? &g : nullptr));
      },
      py::arg("a"), py::arg("va"), py::arg("vs"), py::arg("weights"), py::arg("targets"),
      py::arg("loss") = "ce", py::arg("gamma") = py::none());
  m.def(
      "oracle_weights",
      [](const Array& a, const Array& va, const Array& vs, const std::vector<int>& targets) {
        const StreamBundle b = bundle_of(a, va, vs);
        return to_array(oracle_weights(b, targets_of(targets, b.states())).weights.matrix());
      },
      py::arg("a"), py::arg("va"), py::arg("vs"), py::arg("targets"));

  // Decoding and scoring.
  py::class_<StateGraph>(m, "StateGraph")
      .def_static("uniform", &StateGraph::Uniform, py::arg("states"))
      .def_static("from_json", &parse_state_graph, py::arg("text"))
      .def("to_json", &state_graph_to_json)
      .def_property_readonly("num_states", &StateGraph::num_states);
  m.def(
      "viterbi",
      [](const Array& fused, const StateGraph& g, double scale) {
        const DecodeResult r = viterbi(fused_of(fused), g, scale);
        return py::make_tuple(r.path, r.words, r.score);
      },
      py::arg("fused"), py::arg("graph"), py::arg("acoustic_scale") = 1.0,
      "Returns (path, words, score).");
  m.def(
      "forward_backward",
      [](const Array& fused, const StateGraph& g, double scale) {
        const auto r = forward_backward(fused_of(fused), g, scale);
        return py::make_tuple(to_array(r.gamma), r.log_partition);
      },
      py::arg("fused"), py::arg("graph"), py::arg("acoustic_scale") = 1.0,
      "Returns (gamma, log_partition).");
  m.def(
      "wer",
      [](const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
        const WerResult r = wer(ref, hyp);
        py::dict d;
        d["wer"] = r.wer;
        d["substitutions"] = r.substitutions;
        d["insertions"] = r.insertions;
        d["deletions"] = r.deletions;
        d["ref_words"] = r.ref_words;
        return d;
      },
      py::arg("ref"), py::arg("hyp"));

  // Audio.
  m.def(
      "mfcc",
      [](const Array& samples, double rate) {
        return to_array(mfcc(Waveform(to_vector(samples), rate), FrameSpec{}));
      },
      py::arg("samples"), py::arg("sample_rate") = 16000.0);
  m.def(
      "mix_at_snr",
      [](const Array& clean, const Array& noise, double snr_db, std::uint64_t seed, double rate) {
        return mix_at_snr(Waveform(to_vector(clean), rate), Waveform(to_vector(noise), rate), snr_db,
                          seed)
            .samples;
      },
      py::arg("clean"), py::arg("noise"), py::arg("snr_db"), py::arg("seed") = 0,
      py::arg("sample_rate") = 16000.0);

  // Integration net.
  py::class_<IntegrationNet>(m, "IntegrationNet")
      .def_static("init", &net_init, py::arg("dims") = kDefaultNetDims, py::arg("seed") = 1)
      .def_static("load", &load_net, py::arg("path"))
      .def_static("from_json", &net_from_json, py::arg("text"))
      .def("save", [](const IntegrationNet& n, const std::string& path) { save_net(n, path); })
      .def("to_json", &net_to_json)
      .def("predict",
           [](const IntegrationNet& n, const Array& rel) {
             return to_array(predict_weights(n, to_matrix(rel)).matrix());
           },
           py::arg("reliability"))
      .def_property_readonly("dims", &IntegrationNet::dims)
      .def_property_readonly("num_parameters", &IntegrationNet::num_parameters);

  // Pipeline.
  m.def(
      "synth",
      [](const std::string& out, std::uint64_t seed, std::size_t n_utterances,
         std::optional<std::string> snr, bool force) {
        SyntheticSpec spec;
        spec.n_utterances = n_utterances;
        if (snr) spec.snr_list = parse_snr_list(*snr);
        py::gil_scoped_release release;
        synth_generate(spec, seed, out, force);
      },
      py::arg("out"), py::arg("seed") = 1, py::arg("n_utterances") = 1400,
      py::arg("snr") = py::none(), py::arg("force") = false);
  m.def(
      "run",
      [](const std::string& config_text, std::optional<std::string> corpus,
         std::optional<std::string> out) {
        ExperimentConfig cfg = parse_experiment_config(config_text);
        if (corpus) cfg.corpus_dir = *corpus;
        if (out) cfg.out_dir = *out;
        py::gil_scoped_release release;
        run_experiment(cfg);
      },
      py::arg("config_text") = "", py::arg("corpus") = py::none(), py::arg("out") = py::none(),
      "Runs every stage with a config given as text.");
  m.def("report", &report, py::arg("out_dir"));
}
