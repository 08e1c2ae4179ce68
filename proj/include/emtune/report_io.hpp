#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "emtune/metrics.hpp"
#include "emtune/tensor.hpp"

namespace emtune {

// Comma-separated text with a header row. Values use round-trip precision.

// id,label,e0,...,e{D-1}
std::string format_embeddings_csv(const std::vector<std::string>& ids,
                                  const std::vector<std::string>& labels, const Matrix& embeddings);

// id,label,x,y
std::string format_projection_csv(const std::vector<std::string>& ids,
                                  const std::vector<std::string>& labels, const Matrix& coordinates);

// metric,class,value rows: one invariant_distance row per class, then
// mean_invariant_distance and davies_bouldin.
std::string format_cluster_report_csv(const ClusterReport& report,
                                      const std::vector<std::string>& class_names);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace emtune
