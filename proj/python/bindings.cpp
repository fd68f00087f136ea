// Copyright (c) 2026 The powq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "commands.hpp"
#include "powq/dataset.hpp"
#include "powq/error.hpp"
#include "powq/model.hpp"
#include "powq/quant.hpp"
#include "powq/search.hpp"
#include "powq/soft_round.hpp"

namespace py = pybind11;
using namespace powq;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& arr) {
  Shape shape(arr.shape(), arr.shape() + arr.ndim());
  return Tensor(std::move(shape), std::vector<float>(arr.data(), arr.data() + arr.size()));
}

py::array_t<float> to_array(const Tensor& t) {
  py::array_t<float> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Granularity make_granularity(const std::string& kind, std::size_t group_size) {
  return {granularity_kind_from_string(kind), group_size};
}

QuantConfig make_config(int bits, double a, const std::string& granularity, std::size_t group_size) {
  QuantConfig cfg{bits, a, make_granularity(granularity, group_size)};
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_powq, m) {
  m.doc() = "Power quantization kernels";
  m.attr("__version__") = POWQ_VERSION;

  static py::exception<Error> error(m, "PowqError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error.ptr())(e.kind() + ": " + e.what());
      py::setattr(exc, "kind", py::str(e.kind()));
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  py::class_<QuantizedTensor>(m, "QuantizedTensor")
      .def_property_readonly("shape", [](const QuantizedTensor& q) { return q.shape; })
      .def_property_readonly("codes",
                             [](const QuantizedTensor& q) {
                               py::array_t<std::int8_t> out(
                                   std::vector<py::ssize_t>(q.shape.begin(), q.shape.end()));
                               std::copy(q.codes.begin(), q.codes.end(), out.mutable_data());
                               return out;
                             })
      .def_property_readonly("scales", [](const QuantizedTensor& q) { return q.scales; })
      .def_readonly("exponent", &QuantizedTensor::exponent)
      .def_readonly("bits", &QuantizedTensor::bits)
      .def_property_readonly("granularity",
                             [](const QuantizedTensor& q) { return to_string(q.granularity.kind); })
      .def("__repr__", [](const QuantizedTensor& q) {
        std::ostringstream os;
        os << "QuantizedTensor(shape=" << shape_to_string(q.shape) << ", bits=" << q.bits
           << ", exponent=" << q.exponent << ", groups=" << q.scales.size() << ")";
        return os.str();
      });

  m.def(
      "power_transform", [](const FloatArray& x, double a) { return to_array(power_transform(to_tensor(x), a)); },
      py::arg("x"), py::arg("a"));

  m.def(
      "compute_scale",
      [](const FloatArray& x, int bits, const std::string& granularity, std::size_t group_size) {
        return compute_scale(to_tensor(x), bits, make_granularity(granularity, group_size));
      },
      py::arg("x"), py::arg("bits"), py::arg("granularity") = "per_tensor", py::arg("group_size") = 0);

  m.def(
      "quantize",
      [](const FloatArray& x, int bits, double a, const std::string& granularity, std::size_t group_size) {
        return quantize(to_tensor(x), make_config(bits, a, granularity, group_size));
      },
      py::arg("x"), py::arg("bits"), py::arg("a") = 1.0, py::arg("granularity") = "per_tensor",
      py::arg("group_size") = 0);

  m.def(
      "dequantize", [](const QuantizedTensor& q) { return to_array(dequantize(q)); }, py::arg("q"));

  m.def(
      "fake_quantize",
      [](const FloatArray& x, int bits, double a, const std::string& granularity, std::size_t group_size) {
        return to_array(fake_quantize(to_tensor(x), make_config(bits, a, granularity, group_size)));
      },
      py::arg("x"), py::arg("bits"), py::arg("a") = 1.0, py::arg("granularity") = "per_tensor",
      py::arg("group_size") = 0);

  m.def(
      "reconstruction_error",
      [](const FloatArray& x, int bits, double a, int p, const std::string& granularity, std::size_t group_size) {
        return reconstruction_error(to_tensor(x), make_config(bits, a, granularity, group_size), p);
      },
      py::arg("x"), py::arg("bits"), py::arg("a"), py::arg("p") = 2, py::arg("granularity") = "per_tensor",
      py::arg("group_size") = 0);

  m.def(
      "generate_levels",
      [](const std::string& format, int bits, double a) {
        return generate_levels(level_format_from_string(format), bits, a);
      },
      py::arg("format"), py::arg("bits"), py::arg("a") = 0.5);

  m.def(
      "search_exponent",
      [](const std::vector<FloatArray>& weights, int bits, int p, double init) {
        std::vector<Tensor> tensors;
        for (const auto& w : weights) tensors.push_back(to_tensor(w));
        SearchConfig cfg;
        cfg.bits = bits;
        cfg.p = p;
        cfg.init = init;
        cfg.validate();
        SearchResult r;
        {
          py::gil_scoped_release release;
          r = nelder_mead_min([&](double a) { return exponent_objective(tensors, a, bits, p); }, cfg);
        }
        return py::dict(py::arg("a") = r.a, py::arg("error") = r.error, py::arg("iterations") = r.iterations,
                        py::arg("evaluations") = r.evaluations);
      },
      py::arg("weights"), py::arg("bits") = 4, py::arg("p") = 2, py::arg("init") = 0.5);

  m.def("dsq", &dsq, py::arg("eps"), py::arg("beta"));
  m.def("dsq_grad", &dsq_grad, py::arg("eps"), py::arg("beta"));
  m.def("rectified_sigmoid", &rectified_sigmoid, py::arg("eps"));
  m.def(
      "beta_schedule",
      [](const std::string& spec, long total_steps) {
        const BetaScheduler sched = BetaScheduler::parse(spec, total_steps);
        std::vector<double> out;
        out.reserve(static_cast<std::size_t>(total_steps));
        for (long s = 0; s < total_steps; ++s) out.push_back(sched(s));
        return out;
      },
      py::arg("spec"), py::arg("total_steps"));

  m.def(
      "evaluate",
      [](const std::string& model_path, const std::string& data_path, std::optional<std::string> bundle_path) {
        const ModelSpec model = load_model(model_path);
        const Dataset data = load_csv(data_path, static_cast<int>(model.output_dim()));
        if (!bundle_path) return evaluate(model, data);
        const QuantPolicy policy = load_bundle(*bundle_path);
        return evaluate(model, data, &policy);
      },
      py::arg("model"), py::arg("data"), py::arg("bundle") = py::none());

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a powq subcommand in-process; returns (exit_code, stdout, stderr).");
}
