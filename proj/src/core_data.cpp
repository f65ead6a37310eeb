#include "ssme/core_data.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace ssme {

namespace {

constexpr double kRowSumTolerance = 1e-3;

void check_and_normalize_row(std::vector<double>& row, int line_no) {
  double total = 0.0;
  for (double v : row) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DataError("line " + std::to_string(line_no) +
                      ": probability outside [0, 1]");
    }
    total += v;
  }
  if (std::fabs(total - 1.0) > kRowSumTolerance) {
    throw DataError("line " + std::to_string(line_no) + ": row sums to " +
                    std::to_string(total) + ", outside 1 +/- 1e-3");
  }
  for (double& v : row) v /= total;
}

void check_shape(const EvaluationDataset& d, const ExampleRecord& rec,
                 int line_no) {
  if (!d.records.empty()) {
    if (rec.profile.classifier_count() != d.classifier_count() ||
        rec.profile.class_count() != d.class_count()) {
      throw DataError("line " + std::to_string(line_no) +
                      ": inconsistent classifier or class count");
    }
  }
  if (rec.profile.class_count() < 2) {
    throw DataError("line " + std::to_string(line_no) +
                    ": need at least 2 classes");
  }
  for (const auto& row : rec.profile.values) {
    if (static_cast<int>(row.size()) != rec.profile.class_count()) {
      throw DataError("line " + std::to_string(line_no) +
                      ": ragged profile rows");
    }
  }
  if (rec.label && (*rec.label < 0 || *rec.label >= rec.profile.class_count())) {
    throw DataError("line " + std::to_string(line_no) + ": label " +
                    std::to_string(*rec.label) + " out of range");
  }
}

}  // namespace

std::string metric_name(MetricKind kind) {
  switch (kind) {
    case MetricKind::Accuracy: return "accuracy";
    case MetricKind::EceBinary: return "ece";
    case MetricKind::EceTopLabel: return "ece_top_label";
    case MetricKind::Auc: return "auc";
    case MetricKind::Auprc: return "auprc";
  }
  return "unknown";
}

MetricKind metric_from_name(const std::string& name) {
  if (name == "accuracy" || name == "acc") return MetricKind::Accuracy;
  if (name == "ece") return MetricKind::EceBinary;
  if (name == "ece_top_label" || name == "ece-top") return MetricKind::EceTopLabel;
  if (name == "auc") return MetricKind::Auc;
  if (name == "auprc") return MetricKind::Auprc;
  throw DataError("unknown metric: " + name);
}

EvaluationDataset parse_jsonl(const std::string& content) {
  EvaluationDataset d;
  std::istringstream in(content);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    ExampleRecord rec;
    try {
      rec.id = j.at("id").get<std::string>();
      rec.profile.values =
          j.at("scores").get<std::vector<std::vector<double>>>();
      if (j.contains("label")) rec.label = j.at("label").get<int>();
      if (j.contains("group")) rec.group = j.at("group").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    for (auto& row : rec.profile.values) check_and_normalize_row(row, line_no);
    check_shape(d, rec, line_no);
    d.records.push_back(std::move(rec));
  }
  return d;
}

std::string serialize_jsonl(const EvaluationDataset& d) {
  std::string out;
  for (const auto& rec : d.records) {
    nlohmann::ordered_json j;
    j["id"] = rec.id;
    j["scores"] = rec.profile.values;
    if (rec.label) j["label"] = *rec.label;
    if (rec.group) j["group"] = *rec.group;
    out += j.dump();
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' '))
      field.pop_back();
    fields.push_back(field);
  }
  return fields;
}

// CSV convenience format, binary only: id, s_1..s_M, optional label, group.
EvaluationDataset parse_csv(std::istream& in) {
  EvaluationDataset d;
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV file");
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "id")
    throw DataError("CSV header must start with 'id'");
  int m = 0;
  std::size_t col = 1;
  while (col < header.size() &&
         header[col] == "s_" + std::to_string(m + 1)) {
    ++m;
    ++col;
  }
  if (m == 0) throw DataError("CSV header has no score columns s_1..s_M");
  int label_col = -1, group_col = -1;
  for (; col < header.size(); ++col) {
    if (header[col] == "label") label_col = static_cast<int>(col);
    else if (header[col] == "group") group_col = static_cast<int>(col);
    else throw DataError("unexpected CSV column: " + header[col]);
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) < 1 + m)
      throw DataError("line " + std::to_string(line_no) + ": too few fields");
    ExampleRecord rec;
    rec.id = fields[0];
    for (int i = 0; i < m; ++i) {
      double p1;
      try {
        p1 = std::stod(fields[1 + i]);
      } catch (const std::exception&) {
        throw DataError("line " + std::to_string(line_no) +
                        ": bad score value '" + fields[1 + i] + "'");
      }
      // s_m is the positive-class (class 1) probability
      rec.profile.values.push_back({1.0 - p1, p1});
    }
    if (label_col >= 0 && label_col < static_cast<int>(fields.size()) &&
        !fields[label_col].empty()) {
      rec.label = std::stoi(fields[label_col]);
    }
    if (group_col >= 0 && group_col < static_cast<int>(fields.size()) &&
        !fields[group_col].empty()) {
      rec.group = fields[group_col];
    }
    for (auto& row : rec.profile.values) check_and_normalize_row(row, line_no);
    check_shape(d, rec, line_no);
    d.records.push_back(std::move(rec));
  }
  return d;
}

}  // namespace

EvaluationDataset load_dataset(const std::string& path, DataFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  if (format == DataFormat::Csv) return parse_csv(in);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_jsonl(buf.str());
}

void save_dataset(const EvaluationDataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << serialize_jsonl(d);
}

ValidationReport validate_dataset(const EvaluationDataset& d) {
  ValidationReport report;
  std::set<std::string> ids;
  for (const auto& rec : d.records) {
    if (!ids.insert(rec.id).second) {
      report.issues.push_back({"id_uniqueness", "duplicate id: " + rec.id, true});
    }
  }
  const int k = d.class_count();
  for (const auto& rec : d.records) {
    for (const auto& row : rec.profile.values) {
      double total = 0.0;
      for (double v : row) total += v;
      if (std::fabs(total - 1.0) > 1e-6) {
        report.issues.push_back(
            {"row_sums", "record " + rec.id + " row sums to " +
                             std::to_string(total), true});
      }
    }
    if (rec.label && (*rec.label < 0 || *rec.label >= k)) {
      report.issues.push_back(
          {"label_range", "record " + rec.id + " label out of range", true});
    }
  }
  std::vector<bool> seen(std::max(k, 0), false);
  for (const auto& rec : d.records) {
    if (rec.label && *rec.label >= 0 && *rec.label < k) seen[*rec.label] = true;
  }
  for (int c = 0; c < k; ++c) {
    if (!seen[c]) {
      report.issues.push_back({"class_coverage",
                               "class " + std::to_string(c) +
                                   " unseen among labeled",
                               false});
    }
  }
  return report;
}

}  // namespace ssme
