// Python bindings for the vidfp core library.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "vidfp/error.hpp"
#include "vidfp/extract.hpp"
#include "vidfp/forest.hpp"
#include "vidfp/pipeline.hpp"
#include "vidfp/quic.hpp"
#include "vidfp/ranker.hpp"
#include "vidfp/report.hpp"
#include "vidfp/synth.hpp"

namespace py = pybind11;
using namespace vidfp;

namespace {

PyObject* g_error = nullptr;

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(line);
    return out;
}

py::bytes to_py(const Bytes& b) { return py::bytes(reinterpret_cast<const char*>(b.data()), b.size()); }

Bytes from_py(const py::bytes& b) {
    std::string s = b;
    return Bytes(s.begin(), s.end());
}

TrainConfig make_config(int n_trees, int max_depth, int n_attributes, std::uint64_t seed) {
    TrainConfig c;
    c.n_trees = n_trees;
    c.max_depth = max_depth;
    c.n_attributes_per_split = n_attributes;
    c.rng_seed = seed;
    return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Video platform fingerprinting from TCP and QUIC handshakes";

    g_error = PyErr_NewException("vidfp._core.VidfpError", PyExc_RuntimeError, nullptr);
    m.add_object("VidfpError", py::handle(g_error));
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object inst = py::reinterpret_borrow<py::object>(g_error)(e.what());
            inst.attr("code") = e.qualified_code();
            PyErr_SetObject(g_error, inst.ptr());
        }
    });

    m.def(
        "derive_initial_keys",
        [](const py::bytes& dcid, std::uint32_t version) {
            auto k = derive_initial_keys(from_py(dcid), version);
            py::dict d;
            d["key"] = to_py(k.key);
            d["iv"] = to_py(k.iv);
            d["hp"] = to_py(k.hp);
            return d;
        },
        py::arg("dcid"), py::arg("version") = kQuicVersion1, "Client Initial packet protection keys.");

    m.def(
        "decrypt_initial",
        [](const py::bytes& datagram, const py::bytes& dcid) {
            auto pkt = decrypt_initial(from_py(datagram), derive_initial_keys(from_py(dcid), kQuicVersion1));
            return py::make_tuple(pkt.packet_number, to_py(pkt.plaintext));
        },
        py::arg("datagram"), py::arg("dcid"), "Returns (packet_number, plaintext).");

    m.def("mutual_information", &mutual_information, py::arg("column"), py::arg("labels"),
          "Mutual information in bits between a discrete column and class ids.");
    m.def(
        "tier_for", [](double s) { return std::string(to_string(tier_for(s))); }, py::arg("score"));
    m.def("quantile_sorted", &quantile_sorted, py::arg("sorted"), py::arg("p"));

    m.def(
        "synth",
        [](const std::string& out_pcap, const std::string& out_labels, std::size_t count, std::uint64_t seed,
           const std::string& provider, const std::string& protocol, double duration, std::uint64_t packets) {
            SynthOptions o;
            o.per_profile = count;
            o.seed = seed;
            if (!provider.empty()) o.provider = parse_provider(provider);
            if (!protocol.empty()) o.protocol = parse_protocol(protocol);
            o.downstream = DownstreamPlan{duration, packets};
            auto samples = synth_corpus(ProfileSet::defaults(), o);
            auto eps = serialize_to_pcap(samples, out_pcap);
            write_labels_csv(samples, eps, out_labels);
            return samples.size();
        },
        py::arg("out_pcap"), py::arg("out_labels"), py::arg("count") = 10, py::arg("seed") = 1,
        py::arg("provider") = "", py::arg("protocol") = "", py::arg("duration") = 0.0, py::arg("packets") = 0,
        "Writes a labeled synthetic capture; returns the flow count.");

    m.def(
        "extract_jsonl",
        [](const std::string& pcap, const std::string& labels) {
            std::map<FlowKey, PlatformLabel> table;
            if (!labels.empty()) table = read_labels_csv(labels);
            std::ostringstream out;
            write_flows_jsonl(pcap, out, ExtractConfig{}, labels.empty() ? nullptr : &table);
            return lines_of(out.str());
        },
        py::arg("pcap"), py::arg("labels") = "", "One JSON document per flow.");

    m.def(
        "classify_jsonl",
        [](const std::string& pcap, const std::string& bank) {
            std::ostringstream out;
            write_predictions_jsonl(pcap, out, Bank::load(bank), ExtractConfig{});
            return lines_of(out.str());
        },
        py::arg("pcap"), py::arg("bank"), "One JSON prediction per provider flow.");

    py::class_<Forest>(m, "Forest")
        .def_static(
            "train",
            [](const std::vector<std::vector<double>>& rows, const std::vector<std::string>& labels, int n_trees,
               int max_depth, int n_attributes, std::uint64_t seed) {
                py::gil_scoped_release nogil;
                return train(Dataset::from_named(rows, labels), make_config(n_trees, max_depth, n_attributes, seed));
            },
            py::arg("rows"), py::arg("labels"), py::arg("n_trees") = 100, py::arg("max_depth") = 16,
            py::arg("n_attributes") = 1, py::arg("seed") = 1)
        .def_static("from_json", [](const std::string& s) { return Forest::from_json(nlohmann::json::parse(s)); })
        .def("to_json", &Forest::serialize)
        .def_readonly("classes", &Forest::classes)
        .def_readonly("degenerate", &Forest::degenerate)
        .def_property_readonly("n_trees", [](const Forest& f) { return f.trees.size(); })
        .def(
            "predict",
            [](const Forest& f, const std::vector<double>& row) {
                auto p = predict(f, row);
                return py::make_tuple(p.label, p.confidence, p.distribution);
            },
            py::arg("row"), "Returns (label, confidence, distribution).");

    m.def(
        "cross_validate",
        [](const std::vector<std::vector<double>>& rows, const std::vector<std::string>& labels, int n_trees,
           int max_depth, int n_attributes, int k, std::uint64_t seed) {
            py::gil_scoped_release nogil;
            return cross_validate(Dataset::from_named(rows, labels), make_config(n_trees, max_depth, n_attributes, seed),
                                  k, seed)
                .accuracy;
        },
        py::arg("rows"), py::arg("labels"), py::arg("n_trees") = 100, py::arg("max_depth") = 16,
        py::arg("n_attributes") = 1, py::arg("k") = 10, py::arg("seed") = 1);
}
