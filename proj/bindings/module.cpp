#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cascade/augment.hpp"
#include "cascade/cli.hpp"
#include "cascade/dataio.hpp"
#include "cascade/objectives.hpp"
#include "cascade/spectrum.hpp"
#include "cascade/validate.hpp"

namespace py = pybind11;
using namespace cascade;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
  std::vector<int> shape;
  for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape.push_back(static_cast<int>(arr.shape(i)));
  std::vector<double> values(arr.data(), arr.data() + arr.size());
  return Tensor(std::move(shape), std::move(values));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape;
  for (int i = 0; i < t.rank(); ++i) shape.push_back(t.dim(i));
  py::array_t<double> arr(shape);
  std::copy(t.data(), t.data() + t.size(), arr.mutable_data());
  return arr;
}

AugmentPolicy policy_from_kwargs(double jitter_sigma, double scale_sigma, double shift_max_ratio, double keep_ratio,
                                 double remove_prob, double add_prob, double add_amp) {
  AugmentPolicy p;
  p.time.jitter_sigma_ratio = jitter_sigma;
  p.time.scale_sigma = scale_sigma;
  p.time.shift_max_ratio = shift_max_ratio;
  p.time.keep_ratio = keep_ratio;
  p.freq.remove_prob = remove_prob;
  p.freq.add_prob = add_prob;
  p.freq.add_amp_ratio = add_amp;
  p.validate();
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "cascaded self-supervised EEG representation learning (C++ core)";

  py::register_exception<Error>(m, "CascadeError");

  m.def(
      "compute_spectrum",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x) {
        return array_from_tensor(compute_spectrum(tensor_from_array(x)));
      },
      py::arg("x"), "Per-channel magnitude spectrum of a [C,T] or [N,C,T] signal.");

  m.def(
      "naive_dft",
      [](const std::vector<double>& x) { return naive_dft(x); },
      py::arg("x"), "Direct O(T^2) DFT of a real signal; reference oracle.");

  m.def(
      "ntxent_loss",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& z,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& z_tilde, double tau, bool mean) {
        auto a = make_const(tensor_from_array(z));
        auto b = make_const(tensor_from_array(z_tilde));
        return ntxent_loss(a, b, tau, mean)->value.item();
      },
      py::arg("z"), py::arg("z_tilde"), py::arg("tau") = 0.07, py::arg("mean") = false);

  m.def(
      "recon_loss",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
        return recon_loss(make_const(tensor_from_array(a)), make_const(tensor_from_array(b)))->value.item();
      },
      py::arg("reconstructed"), py::arg("target"));

  m.def(
      "cross_entropy",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& logits,
         const std::vector<int>& labels) {
        return cross_entropy(make_const(tensor_from_array(logits)), labels)->value.item();
      },
      py::arg("logits"), py::arg("labels"));

  m.def("joint_loss", &joint_loss_value, py::arg("l_con_t"), py::arg("l_con_f"), py::arg("l_recon"),
        py::arg("lam") = 0.1);

  m.def(
      "augment_time",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, std::uint64_t seed,
         double jitter_sigma, double scale_sigma, double shift_max_ratio, double keep_ratio) {
        auto policy = policy_from_kwargs(jitter_sigma, scale_sigma, shift_max_ratio, keep_ratio, 0.1, 0.1, 0.1);
        std::mt19937_64 rng(seed);
        auto res = augment_time(tensor_from_array(x), policy, rng);
        return py::make_tuple(array_from_tensor(res.values), to_string(res.method));
      },
      py::arg("x"), py::arg("seed") = 0, py::arg("jitter_sigma") = 0.1, py::arg("scale_sigma") = 0.1,
      py::arg("shift_max_ratio") = 0.1, py::arg("keep_ratio") = 0.5);

  m.def(
      "augment_freq",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& xf, std::uint64_t seed,
         double remove_prob, double add_prob, double add_amp) {
        auto policy = policy_from_kwargs(0.1, 0.1, 0.1, 0.5, remove_prob, add_prob, add_amp);
        std::mt19937_64 rng(seed);
        auto res = augment_freq(tensor_from_array(xf), policy, rng);
        return py::make_tuple(array_from_tensor(res.values), to_string(res.method));
      },
      py::arg("xf"), py::arg("seed") = 0, py::arg("remove_prob") = 0.1, py::arg("add_prob") = 0.1,
      py::arg("add_amp") = 0.1);

  m.def(
      "generate_synthetic",
      [](int n_subjects, int trials_per_subject, int channels, int segment_len, int segments_per_trial,
         std::uint64_t seed) {
        SynthParams p;
        p.n_subjects = n_subjects;
        p.trials_per_subject = trials_per_subject;
        p.channels = channels;
        p.segment_len = segment_len;
        p.segments_per_trial = segments_per_trial;
        p.seed = seed;
        py::list out;
        for (const auto& rec : synth_generate(p)) {
          py::dict d;
          d["subject"] = rec.subject_id;
          d["trial"] = rec.trial_id;
          d["rate"] = rec.sampling_rate;
          d["arousal"] = rec.arousal_raw;
          d["valence"] = rec.valence_raw;
          d["samples"] = array_from_tensor(rec.samples);
          out.append(std::move(d));
        }
        return out;
      },
      py::arg("n_subjects") = 8, py::arg("trials_per_subject") = 6, py::arg("channels") = 8,
      py::arg("segment_len") = 128, py::arg("segments_per_trial") = 3, py::arg("seed") = 7);

  m.def(
      "gradcheck_model",
      [](int channels, int samples, int filters, int batch, double h, int per_tensor, std::uint64_t seed) {
        ModelGeometry g;
        g.channels = channels;
        g.samples = samples;
        g.filters = filters;
        return run_model_gradcheck(g, batch, h, per_tensor, seed).worst;
      },
      py::arg("channels") = 4, py::arg("samples") = 32, py::arg("filters") = 4, py::arg("batch") = 4,
      py::arg("h") = 1e-5, py::arg("per_tensor") = 8, py::arg("seed") = 1,
      "Worst finite-difference relative error over every parameter group.");

  m.def(
      "run", [](const std::vector<std::string>& args) { return cascade::cli::dispatch(args); }, py::arg("args"),
      "Invoke the command-line interface in-process; returns its exit code.");

  m.attr("__version__") = "0.1.0";
}
