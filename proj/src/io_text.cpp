// Structured-text emission: ndjson attack traces, report documents, CSV
// tables. Kept apart from the binary formats in io.cpp.

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pertfool/analysis.hpp"
#include "pertfool/io.hpp"

namespace pertfool::io {

namespace fs = std::filesystem;
using nlohmann::json;

void save_trace(const fs::path& path, const AttackTrace& trace,
                const std::map<std::string, std::string>& meta) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot open for writing: " + path.string());
    json start;
    start["event"] = "start";
    for (const auto& [k, v] : meta) start[k] = v;
    os << start.dump() << "\n";
    std::size_t next_event = 0;
    for (const auto& row : trace.rows) {
        while (next_event < trace.events.size() && trace.events[next_event].t <= row.t) {
            json e;
            e["event"] = trace.events[next_event].event;
            e["t"] = trace.events[next_event].t;
            os << e.dump() << "\n";
            ++next_event;
        }
        json r;
        r["t"] = row.t;
        r["ratio"] = row.ratio;
        r["best_ratio"] = row.best_ratio;
        r["linf"] = row.linf;
        r["l2"] = row.l2;
        r["hist"] = row.histogram;
        os << r.dump() << "\n";
    }
    for (; next_event < trace.events.size(); ++next_event) {
        json e;
        e["event"] = trace.events[next_event].event;
        e["t"] = trace.events[next_event].t;
        os << e.dump() << "\n";
    }
    json fin;
    fin["event"] = "end";
    fin["final_iter"] = trace.final_iter;
    fin["final_ratio"] = trace.final_ratio;
    fin["target_reached"] = trace.target_reached;
    os << fin.dump() << "\n";
    if (!os) throw Error("write failed: " + path.string());
}

AttackTrace load_trace(const fs::path& path, std::map<std::string, std::string>* meta_out) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open: " + path.string());
    AttackTrace trace;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error&) {
            throw FormatError(FormatError::Kind::malformed_header, "trace: bad ndjson line");
        }
        if (j.contains("event")) {
            const std::string event = j["event"];
            if (event == "start") {
                if (meta_out)
                    for (auto& [k, v] : j.items())
                        if (k != "event" && v.is_string()) (*meta_out)[k] = v;
            } else if (event == "end") {
                trace.final_iter = j.value("final_iter", 0LL);
                trace.final_ratio = j.value("final_ratio", 0.0);
                trace.target_reached = j.value("target_reached", false);
            } else {
                trace.events.push_back({j.value("t", 0LL), event});
            }
            continue;
        }
        TraceRow row;
        row.t = j.value("t", 0LL);
        row.ratio = j.value("ratio", 0.0);
        row.best_ratio = j.value("best_ratio", 0.0);
        row.linf = j.value("linf", 0.0);
        row.l2 = j.value("l2", 0.0);
        row.histogram = j.value("hist", std::vector<long long>{});
        trace.rows.push_back(std::move(row));
    }
    return trace;
}

std::string report_to_json(const FoolingReport& rep) {
    json j;
    j["fooling_ratio"] = rep.fooling_ratio;
    j["leakage"] = rep.leakage;
    json rates = json::object();
    for (const auto& [label, rate] : rep.per_class_target_rate)
        rates[std::to_string(label)] = rate;
    j["per_class_target_rate"] = rates;
    j["n_source"] = rep.n_source;
    j["n_nonsource"] = rep.n_nonsource;
    j["perturbation_linf"] = rep.linf;
    j["perturbation_l2"] = rep.l2;
    return j.dump(2) + "\n";
}

void save_report(const fs::path& path, const FoolingReport& rep) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot open for writing: " + path.string());
    os << report_to_json(rep);
}

void save_hops_csv(const fs::path& path, const HopTrace& hops) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot open for writing: " + path.string());
    os << "t,label,count\n";
    for (const auto& h : hops) os << h.t << "," << h.max_label << "," << h.frequency << "\n";
}

void save_distance_csv(const fs::path& path, const DistanceTable& table) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot open for writing: " + path.string());
    os << "source,target,mean_l2,std_l2,converged,attempted\n";
    os.precision(10);
    for (const auto& c : table) {
        os << c.source << "," << c.target << ",";
        if (c.mean)
            os << *c.mean << "," << *c.stddev;
        else
            os << ",";
        os << "," << c.norms.size() << "," << c.attempted << "\n";
    }
}

}  // namespace pertfool::io
