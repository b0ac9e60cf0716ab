#include "birl/trace_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace birl {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

}  // namespace

std::string trace_header(int dim_x) {
    std::string h = "k,samples,phi,grad_norm,eps_theta,eps_theta_L,eps_V,eps_V_L";
    for (int i = 0; i < dim_x; ++i) h += ",x_" + std::to_string(i);
    h += ",zeta,alpha,beta,w,tau";
    return h;
}

std::string format_trace(const std::vector<TraceRecord>& records) {
    if (records.empty()) throw std::invalid_argument("format_trace: no records");
    const int dim = static_cast<int>(records.front().x.size());
    std::string out = trace_header(dim) + "\n";
    for (const TraceRecord& r : records) {
        out += std::to_string(r.k) + "," + std::to_string(r.samples) + "," + fmt(r.phi) + "," +
               fmt(r.grad_norm) + "," + fmt(r.residuals.eps_theta) + "," +
               fmt(r.residuals.eps_theta_pen) + "," + fmt(r.residuals.eps_v) + "," +
               fmt(r.residuals.eps_v_pen);
        for (int i = 0; i < dim; ++i) out += "," + fmt(r.x[i]);
        out += "," + fmt(r.sched.zeta) + "," + fmt(r.sched.alpha) + "," + fmt(r.sched.beta) +
               "," + fmt(r.sched.w) + "," + fmt(r.sched.tau) + "\n";
    }
    return out;
}

void write_trace(const std::string& path, const std::vector<TraceRecord>& records) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_trace: cannot open " + path);
    f << format_trace(records);
    if (!f) throw std::runtime_error("write_trace: write failed for " + path);
}

std::vector<TraceRecord> read_trace(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_trace: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("read_trace: empty file " + path);
    const auto header = split_csv(line);
    if (header.size() < 13 || header[0] != "k") {
        throw std::runtime_error("read_trace: unrecognized header in " + path);
    }
    const int dim = static_cast<int>(header.size()) - 13;

    std::vector<TraceRecord> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            throw std::runtime_error("read_trace: malformed row in " + path);
        }
        TraceRecord r;
        int c = 0;
        r.k = std::stoll(cells[c++]);
        r.samples = std::stoll(cells[c++]);
        r.phi = std::stod(cells[c++]);
        r.grad_norm = std::stod(cells[c++]);
        r.residuals.eps_theta = std::stod(cells[c++]);
        r.residuals.eps_theta_pen = std::stod(cells[c++]);
        r.residuals.eps_v = std::stod(cells[c++]);
        r.residuals.eps_v_pen = std::stod(cells[c++]);
        r.x.resize(dim);
        for (int i = 0; i < dim; ++i) r.x[i] = std::stod(cells[c++]);
        r.sched.zeta = std::stod(cells[c++]);
        r.sched.alpha = std::stod(cells[c++]);
        r.sched.beta = std::stod(cells[c++]);
        r.sched.w = std::stod(cells[c++]);
        r.sched.tau = std::stod(cells[c++]);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace birl
