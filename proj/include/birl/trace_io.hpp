#pragma once

#include <string>
#include <vector>

#include "birl/algorithm.hpp"

namespace birl {

// Header for a trace of control dimension d:
// k,samples,phi,grad_norm,eps_theta,eps_theta_L,eps_V,eps_V_L,x_0..x_{d-1},zeta,alpha,beta,w,tau
std::string trace_header(int dim_x);

// Serializes records with 17 significant digits; includes the header row.
std::string format_trace(const std::vector<TraceRecord>& records);

void write_trace(const std::string& path, const std::vector<TraceRecord>& records);

// Parses a file produced by write_trace back into records (schedules included).
std::vector<TraceRecord> read_trace(const std::string& path);

}  // namespace birl
