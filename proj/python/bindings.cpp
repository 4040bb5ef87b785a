// Copyright 2026 The QRMI Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "qrmi/circuit.hpp"
#include "qrmi/cluster_sim.hpp"
#include "qrmi/registry.hpp"

namespace py = pybind11;
using namespace qrmi;

namespace {

py::dict to_dict(const Counts& counts) {
  py::dict d;
  for (const auto& [k, v] : counts) d[py::str(k)] = v;
  return d;
}

py::object parse_json(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

std::optional<std::chrono::milliseconds> millis(std::optional<std::int64_t> ms) {
  if (!ms) return std::nullopt;
  return std::chrono::milliseconds(*ms);
}

// Thin owner so Python sees one object per registry.
class PyRegistry {
 public:
  explicit PyRegistry(const RegistryConfig& cfg, std::optional<std::uint64_t> seed)
      : reg_(Registry::open(cfg, Registry::Options{nullptr, process_env(), seed})) {}

  Registry& get() { return *reg_; }

 private:
  std::unique_ptr<Registry> reg_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Quantum resource management core";

  static py::exception<Error> error_type(m, "QrmiError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error_type;
      py::tuple args = py::make_tuple(std::string(to_string(e.code())), std::string(e.what()));
      PyErr_SetObject(exc.ptr(), args.ptr());
    }
  });

  m.def("execute_circuit",
        [](const std::string& text, std::uint64_t fallback_seed) {
          return to_dict(execute_circuit(parse_circuit(text), fallback_seed));
        },
        py::arg("text"), py::arg("fallback_seed") = 0,
        "Parse a circuit-v1 program and sample it. Returns {bitstring: count}.");
  m.def("normalize_circuit", [](const std::string& text) { return to_text(parse_circuit(text)); },
        py::arg("text"), "Parse and re-serialize a circuit-v1 program.");

  py::class_<AcquisitionToken>(m, "Token")
      .def_property_readonly("token", [](const AcquisitionToken& t) { return t.token; })
      .def_property_readonly("resource", [](const AcquisitionToken& t) { return t.resource.str(); })
      .def_property_readonly("slot", [](const AcquisitionToken& t) { return t.slot; })
      .def("__repr__", [](const AcquisitionToken& t) {
        return "<Token " + t.resource.str() + " slot=" + std::to_string(t.slot) + ">";
      });

  py::class_<PyRegistry>(m, "Registry")
      .def_static("from_file",
                  [](const std::filesystem::path& path, std::optional<std::uint64_t> seed) {
                    return std::make_unique<PyRegistry>(load_config(path), seed);
                  },
                  py::arg("path"), py::arg("seed") = py::none())
      .def_static("from_json",
                  [](const std::string& text, std::optional<std::uint64_t> seed) {
                    return std::make_unique<PyRegistry>(parse_config(text), seed);
                  },
                  py::arg("text"), py::arg("seed") = py::none())
      .def("ids",
           [](PyRegistry& r) {
             std::vector<std::string> out;
             for (const auto& id : r.get().ids()) out.push_back(id.str());
             return out;
           })
      .def("list",
           [](PyRegistry& r) {
             std::vector<std::pair<std::string, std::map<std::string, std::string>>> out;
             for (const auto& [id, meta] : r.get().list()) out.emplace_back(id.str(), meta.entries);
             return out;
           })
      .def("is_accessible", [](PyRegistry& r, const std::string& id) { return r.get().is_accessible(ResourceId(id)); })
      .def("acquire",
           [](PyRegistry& r, const std::string& id, const std::string& requester,
              std::optional<std::int64_t> timeout_ms) {
             py::gil_scoped_release unlocked;
             return r.get().acquire(ResourceId(id), requester, millis(timeout_ms));
           },
           py::arg("resource"), py::arg("requester") = "", py::arg("timeout_ms") = py::none())
      .def("release", [](PyRegistry& r, const AcquisitionToken& t) { r.get().release(t); })
      .def("task_start",
           [](PyRegistry& r, const AcquisitionToken& t, const std::string& body,
              std::optional<std::int64_t> shots, const std::string& format) {
             TaskPayload p;
             p.format = format;
             p.body = body;
             p.shots = shots;
             return r.get().task_start(t, p).str();
           },
           py::arg("token"), py::arg("body"), py::arg("shots") = py::none(),
           py::arg("format") = std::string(kFormatCircuitV1))
      .def("task_stop", [](PyRegistry& r, const std::string& task) { r.get().task_stop(TaskId(task)); })
      .def("task_status",
           [](PyRegistry& r, const std::string& task) {
             return std::string(to_string(r.get().task_status(TaskId(task)).state));
           })
      .def("task_result",
           [](PyRegistry& r, const std::string& task) {
             TaskResult res;
             {
               py::gil_scoped_release unlocked;
               res = r.get().task_result(TaskId(task));
             }
             return to_dict(res.counts);
           },
           "Blocks until the task is terminal. Raises QrmiError unless it Completed.")
      .def("target",
           [](PyRegistry& r, const std::string& id) { return parse_json(r.get().target(ResourceId(id)).body); })
      .def("metadata", [](PyRegistry& r, const std::string& id) { return r.get().metadata(ResourceId(id)).entries; })
      .def("lock_events",
           [](PyRegistry& r, const std::string& id) {
             py::list out;
             for (const auto& e : r.get().pool(ResourceId(id))->events()) out.append(parse_json(to_json_line(e)));
             return out;
           })
      .def("close", [](PyRegistry& r) { r.get().close(); });

  m.def("simulate",
        [](const std::filesystem::path& scenario, std::optional<std::uint64_t> seed) {
          Scenario sc = load_scenario(scenario);
          if (seed) sc.seed = *seed;
          SimTrace trace;
          std::map<std::string, double> util;
          {
            py::gil_scoped_release unlocked;
            trace = simulate(sc.cluster, sc.jobs, sc.seed);
            util = utilization(trace, sc.cluster);
          }
          py::dict out;
          out["makespan_ms"] = trace.makespan.count();
          out["jobs"] = sc.jobs.size();
          out["unfinished"] = trace.unfinished;
          out["utilization"] = util;
          py::list events;
          std::string lines = trace_jsonl(trace);
          std::size_t start = 0;
          while (start < lines.size()) {
            auto end = lines.find('\n', start);
            events.append(parse_json(lines.substr(start, end - start)));
            start = end + 1;
          }
          out["events"] = events;
          return out;
        },
        py::arg("scenario"), py::arg("seed") = py::none(),
        "Run a scenario file in simulated time and return a summary dict.");
}
