#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "obliv/bench.hpp"
#include "obliv/error.hpp"
#include "obliv/pipeline.hpp"

namespace py = pybind11;
using namespace obliv;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// Rows are documents, columns are float features.
FeatureMatrix ToFeatures(const FloatArray& a) {
    if (a.ndim() != 2) throw DimensionError("features must be a 2-d array (docs x features)");
    const auto docs = static_cast<std::size_t>(a.shape(0));
    const auto feats = static_cast<std::size_t>(a.shape(1));
    std::vector<float> values(a.data(), a.data() + docs * feats);
    return FeatureMatrix(docs, feats, std::move(values));
}

py::array_t<float> FromFeatures(const FeatureMatrix& m) {
    const FeatureMatrix x = m.orientation() == Orientation::doc_major ? m : m.transposed();
    py::array_t<float> out({x.num_docs(), x.num_features()});
    std::copy(x.values().begin(), x.values().end(), out.mutable_data());
    return out;
}

template <typename T>
py::array_t<T> ToArray(const std::vector<T>& v) {
    py::array_t<T> out(v.size());
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

}  // namespace

PYBIND11_MODULE(_oblivforest, m) {
    m.doc() = "Oblivious forest binarization and apply kernels";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<CapabilityError>(m, "CapabilityError", base.ptr());
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());

    py::class_<ObliviousForest>(m, "Forest")
        .def_property_readonly("num_float_features", [](const ObliviousForest& f) { return f.num_float_features; })
        .def_property_readonly("num_binary_features", &ObliviousForest::num_binary_features)
        .def_property_readonly("num_trees", &ObliviousForest::num_trees)
        .def_property_readonly("trees_per_height", [](const ObliviousForest& f) { return f.trees_per_height; })
        .def_readwrite("scale", &ObliviousForest::scale)
        .def_readwrite("bias", &ObliviousForest::bias)
        .def("save", [](const ObliviousForest& f, const std::string& path) { save_forest(path, f); })
        .def("to_bytes",
             [](const ObliviousForest& f) {
                 const auto b = serialize_forest(f);
                 return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
             })
        .def("__eq__", [](const ObliviousForest& a, const ObliviousForest& b) { return a == b; });

    m.def(
        "generate_forest",
        [](std::uint32_t float_features, std::uint32_t binary_features,
           std::array<std::uint32_t, kHeightSlots> trees_per_height, std::uint64_t seed) {
            return generate_forest(SyntheticSpec{float_features, binary_features, trees_per_height, seed, 0});
        },
        py::arg("float_features"), py::arg("binary_features"), py::arg("trees_per_height"), py::arg("seed") = 0);
    m.def("load_forest", &load_forest, py::arg("path"));
    m.def(
        "forest_from_bytes",
        [](const py::bytes& b) {
            const std::string s = b;
            return deserialize_forest(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
        },
        py::arg("data"));

    m.def(
        "generate_features",
        [](std::size_t docs, std::size_t features, std::uint64_t seed) {
            return FromFeatures(generate_features(docs, features, seed));
        },
        py::arg("docs"), py::arg("features"), py::arg("seed") = 0);
    m.def(
        "load_features", [](const std::string& path) { return FromFeatures(load_features(path)); },
        py::arg("path"));
    m.def(
        "save_features", [](const std::string& path, const FloatArray& x) { save_features(path, ToFeatures(x)); },
        py::arg("path"), py::arg("features"));

    m.def("shipped_configs", [] {
        std::vector<std::string> ids;
        for (const auto& c : shipped_configs()) ids.push_back(c.id());
        return ids;
    });
    m.def("capabilities", [] { return detect_capabilities().describe(); });

    m.def(
        "evaluate",
        [](const ObliviousForest& forest, const FloatArray& x, const std::string& config) {
            return ToArray(evaluate(ToFeatures(x), forest, StrategyConfig::parse(config)));
        },
        py::arg("forest"), py::arg("features"), py::arg("config") = "naive:naive");
    m.def(
        "evaluate_sums",
        [](const ObliviousForest& forest, const FloatArray& x, const std::string& config) {
            return ToArray(evaluate_sums(ToFeatures(x), forest, StrategyConfig::parse(config)));
        },
        py::arg("forest"), py::arg("features"), py::arg("config") = "naive:naive");

    // Returns one description per divergence; empty means every config agreed.
    m.def(
        "verify",
        [](const ObliviousForest& forest, const FloatArray& x, std::optional<std::vector<std::string>> configs) {
            std::vector<StrategyConfig> parsed;
            if (configs) {
                for (const auto& id : *configs) parsed.push_back(StrategyConfig::parse(id));
            } else {
                parsed = shipped_configs();
            }
            const auto report =
                verify_equivalence(ToFeatures(x), forest, parsed, ExecPolicy::fallback(detect_capabilities()));
            std::vector<std::string> out;
            for (const auto& d : report.divergences) out.push_back(d.describe());
            return out;
        },
        py::arg("forest"), py::arg("features"), py::arg("configs") = py::none());

    m.def(
        "bench",
        [](const ObliviousForest& forest, const FloatArray& x, const std::string& config, const std::string& phase,
           unsigned threads, unsigned reps) {
            BenchOptions opts;
            opts.threads = threads;
            opts.reps = reps;
            const auto features = ToFeatures(x);
            BenchRecord r;
            {
                py::gil_scoped_release release;
                r = run_bench(features, forest, StrategyConfig::parse(config), parse_phase(phase), opts);
            }
            py::dict d;
            d["config"] = r.config;
            d["phase"] = ToString(r.phase);
            d["docs"] = r.docs;
            d["threads"] = r.threads;
            d["reps"] = r.reps;
            d["mean_ns"] = r.mean_ns;
            d["stddev_ns"] = r.stddev_ns;
            d["stable"] = ToString(r.stable);
            d["checksum"] = r.checksum;
            return d;
        },
        py::arg("forest"), py::arg("features"), py::arg("config"), py::arg("phase") = "end-to-end",
        py::arg("threads") = 1, py::arg("reps") = 10);
}
