#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "parblock/bench.hpp"
#include "parblock/config.hpp"
#include "parblock/depgraph.hpp"
#include "parblock/workload.hpp"

namespace py = pybind11;
using namespace parblock;

namespace {

Operation make_op(std::uint32_t app, std::set<Key> reads, std::set<Key> writes, Bytes payload) {
    Operation o;
    o.app = AppId{app};
    o.read_set = std::move(reads);
    o.write_set = std::move(writes);
    o.payload = std::move(payload);
    return o;
}

Block block_of(const std::vector<Operation>& ops) {
    Block b;
    for (std::size_t i = 0; i < ops.size(); ++i) {
        Transaction t;
        t.client = ClientId{0};
        t.client_ts = i + 1;
        t.id = make_txn_id(t.client, t.client_ts);
        t.op = ops[i];
        b.txns.push_back(std::move(t));
    }
    b.apps = apps_of(b.txns);
    return b;
}

py::dict step_dict(const StepReport& s) {
    py::dict d;
    d["clients"] = s.clients;
    d["throughput_tps"] = s.throughput_tps;
    d["p50_ms"] = s.p50_ms;
    d["p95_ms"] = s.p95_ms;
    d["p99_ms"] = s.p99_ms;
    d["mean_ms"] = s.mean_ms;
    d["submitted"] = s.submitted;
    d["committed"] = s.committed;
    d["aborted"] = s.aborted;
    d["failed"] = s.failed;
    d["rejected"] = s.rejected;
    d["abort_rate"] = s.abort_rate;
    d["block_fill_avg"] = s.block_fill_avg;
    d["formation_wait_ms"] = s.formation_wait_ms;
    d["post_order_ms"] = s.post_order_ms;
    d["conflict_fraction"] = s.conflict_fraction;
    d["per_second"] = s.per_second;
    d["valid"] = s.valid;
    d["diagnostics"] = s.diagnostics;
    return d;
}

py::dict report_dict(const RunReport& r) {
    py::dict d;
    d["paradigm"] = std::string(to_string(r.paradigm));
    d["param"] = r.param;
    d["clock"] = r.clock;
    py::list steps;
    for (const auto& s : r.steps) steps.append(step_dict(s));
    d["steps"] = steps;
    d["peak"] = step_dict(r.peak());
    d["valid"] = r.valid();
    return d;
}

py::dict verify_dict(const VerifyResult& v) {
    py::dict d;
    d["ok"] = v.ok;
    d["check"] = v.check;
    d["first_bad_block"] = v.first_bad_block ? py::cast(*v.first_bad_block) : py::none();
    d["detail"] = v.detail;
    return d;
}

RunConfig config_for(const std::string& paradigm, const std::string& toml_text,
                     const std::vector<std::size_t>& clients) {
    auto cfg = parse_config(toml_text).run;
    cfg.paradigm = parse_paradigm(paradigm);
    if (!clients.empty()) cfg.ramp = clients;
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_parblock, m) {
    m.doc() = "Dependency-graph parallel execution, order-execute and execute-order-validate on a simulated cluster";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<InfeasibleWorkload>(m, "InfeasibleWorkload", PyExc_ValueError);

    py::class_<Operation>(m, "Operation")
        .def(py::init(&make_op), py::arg("app") = 0, py::arg("reads") = std::set<Key>{},
             py::arg("writes") = std::set<Key>{}, py::arg("payload") = Bytes{})
        .def_property_readonly("app", [](const Operation& o) { return o.app.value; })
        .def_readwrite("reads", &Operation::read_set)
        .def_readwrite("writes", &Operation::write_set)
        .def_property(
            "payload", [](const Operation& o) { return py::bytes(o.payload); },
            [](Operation& o, const py::bytes& b) { o.payload = std::string(b); })
        .def("__repr__", [](const Operation& o) {
            return "Operation(app=" + std::to_string(o.app.value) + ", reads=" + std::to_string(o.read_set.size()) +
                   " keys, writes=" + std::to_string(o.write_set.size()) + " keys)";
        });

    m.def(
        "conflicts", [](const Operation& a, const Operation& b) { return conflicts(a, b); }, py::arg("first"),
        py::arg("second"), "True if the two operations touch a common key that at least one of them writes.");

    m.def(
        "dependency_edges",
        [](const std::vector<Operation>& ops, bool transitive_reduction) {
            GraphOptions opts;
            opts.transitive_reduction = transitive_reduction;
            return build_graph(block_of(ops), opts).edges();
        },
        py::arg("ops"), py::arg("transitive_reduction") = false,
        "Edges (i, j), i < j, of the dependency graph over operations in block order.");

    m.def(
        "run",
        [](const std::string& paradigm, const std::string& config, const std::vector<std::size_t>& clients,
           std::optional<std::filesystem::path> ledgers) {
            auto cfg = config_for(paradigm, config, clients);
            if (ledgers) cfg.ledger_dir = *ledgers;
            RunReport r;
            {
                py::gil_scoped_release release;
                r = run(cfg);
            }
            return report_dict(r);
        },
        py::arg("paradigm") = "oxii", py::arg("config") = "", py::arg("clients") = std::vector<std::size_t>{},
        py::arg("ledgers") = std::nullopt,
        "Simulated closed-loop run; `config` is TOML text. With `ledgers`, the peak step's ledgers are persisted "
        "there. Returns the report as a dict.");

    m.def(
        "sweep",
        [](const std::string& param, const std::vector<std::string>& values, const std::vector<std::string>& paradigms,
           const std::string& config, const std::vector<std::size_t>& clients) {
            auto cfg = config_for("oxii", config, clients);
            std::vector<Paradigm> ps;
            for (const auto& p : paradigms) ps.push_back(parse_paradigm(p));
            auto sp = parse_sweep_param(param);
            std::vector<RunReport> reports;
            {
                py::gil_scoped_release release;
                reports = sweep(cfg, sp, values, ps);
            }
            std::ostringstream csv;
            write_csv(csv, reports);
            py::list rows;
            for (const auto& r : reports) rows.append(report_dict(r));
            return py::make_tuple(rows, csv.str());
        },
        py::arg("param"), py::arg("values"), py::arg("paradigms") = std::vector<std::string>{"oxii"},
        py::arg("config") = "", py::arg("clients") = std::vector<std::size_t>{},
        "Runs one cell per (value, paradigm). Returns (reports, csv_text).");

    m.def(
        "generate_workload",
        [](const std::string& spec_toml, const std::filesystem::path& out, std::uint64_t key_seed) {
            auto spec = parse_workload_spec(spec_toml);
            KeyRing keys(SignatureScheme::hmac, key_seed);
            provision_clients(keys, spec.num_clients);
            auto txns = generate(spec, keys);
            write_workload(out, spec, txns);
            return txns.size();
        },
        py::arg("spec"), py::arg("path"), py::arg("key_seed") = 7,
        "Writes a replayable workload file from TOML spec text; returns the request count.");

    m.def(
        "verify_ledger", [](const std::filesystem::path& dir) { return verify_dict(verify_ledger_dir(dir)); },
        py::arg("dir"));
    m.def(
        "verify_run",
        [](const std::string& paradigm, const std::filesystem::path& dir, std::size_t sample, std::uint64_t seed) {
            return verify_dict(verify_run(parse_paradigm(paradigm), dir, sample, seed));
        },
        py::arg("paradigm"), py::arg("dir"), py::arg("sample") = 20, py::arg("seed") = 1);
}
