#include "emtune/report_io.hpp"

#include <cstdio>

#include "binary_io.hpp"
#include "emtune/error.hpp"

namespace emtune {
namespace {

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void require_rows(std::size_t ids, std::size_t labels, const Matrix& m, const char* what) {
  if (ids != m.rows() || labels != m.rows()) {
    throw DimensionError(std::string(what) + ": " + std::to_string(ids) + " ids and " +
                         std::to_string(labels) + " labels for " + m.shape_string() + " rows");
  }
}

}  // namespace

std::string format_embeddings_csv(const std::vector<std::string>& ids,
                                  const std::vector<std::string>& labels, const Matrix& embeddings) {
  require_rows(ids.size(), labels.size(), embeddings, "embeddings csv");
  std::string out = "id,label";
  for (std::size_t k = 0; k < embeddings.cols(); ++k) out += ",e" + std::to_string(k);
  out += '\n';
  for (std::size_t r = 0; r < embeddings.rows(); ++r) {
    out += ids[r] + ',' + labels[r];
    for (double v : embeddings.row(r)) out += ',' + number(v);
    out += '\n';
  }
  return out;
}

std::string format_projection_csv(const std::vector<std::string>& ids,
                                  const std::vector<std::string>& labels, const Matrix& coordinates) {
  require_rows(ids.size(), labels.size(), coordinates, "projection csv");
  if (coordinates.cols() != 2) throw DimensionError("projection csv: coordinates must be N x 2");
  std::string out = "id,label,x,y\n";
  for (std::size_t r = 0; r < coordinates.rows(); ++r) {
    out += ids[r] + ',' + labels[r] + ',' + number(coordinates(r, 0)) + ',' +
           number(coordinates(r, 1)) + '\n';
  }
  return out;
}

std::string format_cluster_report_csv(const ClusterReport& report,
                                      const std::vector<std::string>& class_names) {
  if (class_names.size() != report.invariant_distance.size()) {
    throw DimensionError("cluster report csv: class name count mismatch");
  }
  std::string out = "metric,class,value\n";
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    out += "invariant_distance," + class_names[c] + ',' + number(report.invariant_distance[c]) + '\n';
  }
  out += "mean_invariant_distance,," + number(report.mean_invariant_distance) + '\n';
  out += "davies_bouldin,," + number(report.davies_bouldin) + '\n';
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  detail::write_file_bytes(path.string(), text, "output");
}

}  // namespace emtune
