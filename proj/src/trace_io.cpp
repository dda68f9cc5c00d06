#include "perfrl/errors.hpp"
#include "perfrl/harness.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace perfrl {

using nlohmann::json;

std::string format_number(double x) {
    if (std::isnan(x))
        return "nan";
    if (std::isinf(x))
        return x > 0 ? "inf" : "-inf";
    if (x == 0.0)
        return "0";
    char buf[512];
    int exponent = static_cast<int>(std::floor(std::log10(std::abs(x))));
    for (int attempt = 0; attempt < 2; ++attempt) {
        const int decimals = std::max(0, 11 - exponent);
        std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
        // Rounding can carry into a new leading digit (9.99... -> 10.0...).
        const int printed = static_cast<int>(std::floor(std::log10(std::abs(std::strtod(buf, nullptr)))));
        if (printed == exponent)
            break;
        exponent = printed;
    }
    return buf;
}

void write_trace_csv(std::ostream& out, const std::vector<IterationRecord>& trace) {
    out << kTraceHeader << '\n';
    for (const IterationRecord& r : trace)
        out << r.t << ',' << format_number(r.v_reg) << ',' << format_number(r.v_unreg) << ','
            << format_number(r.fw_gap) << ',' << format_number(r.min_mass) << ',' << format_number(r.elapsed_ms)
            << '\n';
}

std::vector<IterationRecord> read_trace_csv(std::istream& in) {
    static const char* const columns[] = {"iter", "v_reg", "v_unreg", "fw_gap", "min_mass", "elapsed_ms"};
    std::string line;
    if (!std::getline(in, line))
        throw ConfigError("header", "empty trace");
    {
        std::istringstream hs(line);
        std::string name;
        for (const char* expected : columns) {
            if (!std::getline(hs, name, ','))
                throw ConfigError(expected, "column missing from header");
            if (name != expected)
                throw ConfigError(expected, "expected column \"" + std::string(expected) + "\", found \"" + name + "\"");
        }
        if (std::getline(hs, name, ','))
            throw ConfigError(name, "unexpected extra column");
    }
    std::vector<IterationRecord> trace;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string cell;
        double values[6];
        for (int k = 0; k < 6; ++k) {
            if (!std::getline(ls, cell, ','))
                throw ConfigError(columns[k], "missing on line " + std::to_string(line_no));
            char* end = nullptr;
            values[k] = std::strtod(cell.c_str(), &end);
            if (cell.empty() || *end != '\0')
                throw ConfigError(columns[k], "not a number on line " + std::to_string(line_no));
        }
        IterationRecord r;
        r.t = static_cast<std::size_t>(values[0]);
        r.v_reg = values[1];
        r.v_unreg = values[2];
        r.fw_gap = values[3];
        r.min_mass = values[4];
        r.elapsed_ms = values[5];
        trace.push_back(r);
    }
    return trace;
}

json to_json(const SensitivityConstants& sc) {
    return {{"eps_p", sc.eps_p}, {"eps_r", sc.eps_r}, {"s_p", sc.s_p}, {"s_r", sc.s_r}, {"d_min", sc.d_min}};
}

json to_json(const TheoryConstants& tc) {
    json j = {{"mu", tc.mu},         {"mu1", tc.mu1},   {"mu2", tc.mu2},        {"l_lambda", tc.l_lambda},
              {"ell_lambda", tc.ell_lambda}, {"l_pi", tc.l_pi}, {"l_p", tc.l_p}, {"ell_pi", tc.ell_pi},
              {"ell_p", tc.ell_p},   {"d_min", tc.d_min}};
    j["pi_min"] = tc.pi_min ? json(*tc.pi_min) : json(nullptr);
    j["log_pi_min"] = tc.log_pi_min ? json(*tc.log_pi_min) : json(nullptr);
    return j;
}

json to_json(const TheorySchedule& ts) {
    json ceilings = json::object();
    for (std::size_t k = 0; k < ts.eps_ceilings.size(); ++k)
        ceilings[kCeilingNames[k]] = ts.eps_ceilings[k];
    return {{"floor", ts.floor},
            {"step", ts.step},
            {"iterations", ts.iterations},
            {"iterations_exact", ts.iterations_exact},
            {"probe", ts.probe},
            {"eval_noise", ts.eval_noise},
            {"batch", ts.batch},
            {"batch_exact", ts.batch_exact},
            {"target_eps", ts.target_eps},
            {"fail_prob", ts.fail_prob},
            {"eps_ceilings", ceilings},
            {"binding_ceiling", kCeilingNames[ts.binding_ceiling]}};
}

json to_json(const ViolationReport& report) {
    json violations = json::array();
    for (const Violation& v : report.violations)
        violations.push_back({{"where", v.where}, {"lhs", v.lhs}, {"rhs", v.rhs}, {"excess", v.excess}});
    json j = {{"check", report.check},
              {"n_checked", report.n_checked},
              {"n_skipped", report.n_skipped},
              {"n_violations", report.n_violations},
              {"violations", violations},
              {"notes", report.notes},
              {"ok", report.ok()}};
    j["max_excess"] = report.n_checked ? json(report.max_excess) : json(nullptr);
    return j;
}

json to_json(const Policy& pi) {
    json rows = json::array();
    for (std::size_t s = 0; s < pi.n_states(); ++s) {
        auto r = pi.row(s);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return rows;
}

} // namespace perfrl
