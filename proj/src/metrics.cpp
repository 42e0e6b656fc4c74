#include "clreg/metrics.hpp"

#include <sstream>

#include "clreg/csvio.hpp"
#include "clreg/errors.hpp"

namespace clreg {

double final_acc(const AccuracyMatrix& m) {
  const std::size_t t = m.task_count();
  if (t == 0) throw invalid_input("final_acc: empty matrix");
  double sum = 0.0;
  for (double a : m.R[t - 1]) sum += a;
  return sum / static_cast<double>(t);
}

double mean_acc(const AccuracyMatrix& m) {
  const std::size_t t = m.task_count();
  if (t == 0) throw invalid_input("mean_acc: empty matrix");
  double outer = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    double inner = 0.0;
    for (std::size_t j = 0; j <= i; ++j) inner += m.R[i][j];
    outer += inner / static_cast<double>(i + 1);
  }
  return outer / static_cast<double>(t);
}

double bwt(const AccuracyMatrix& m) {
  const std::size_t t = m.task_count();
  if (t < 2) throw numeric_error("bwt: undefined for T < 2");
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < t; ++i) sum += m.R[t - 1][i] - m.R[i][i];
  return sum / static_cast<double>(t - 1);
}

double fwt(const AccuracyMatrix& m) {
  const std::size_t t = m.task_count();
  if (t < 2) throw numeric_error("fwt: undefined for T < 2");
  if (m.b.size() != t) throw invalid_input("fwt: baseline vector not populated");
  double sum = 0.0;
  for (std::size_t i = 1; i < t; ++i) sum += m.R[i - 1][i] - m.b[i];
  return sum / static_cast<double>(t - 1);
}

std::string accuracy_matrix_to_csv(const AccuracyMatrix& m) {
  const std::size_t t = m.task_count();
  std::ostringstream out;
  out << "phase";
  for (std::size_t j = 0; j < t; ++j) out << ",task_" << j;
  out << "\n";
  out << "init";
  for (std::size_t j = 0; j < t; ++j) out << "," << format_double(m.b[j]);
  out << "\n";
  for (std::size_t i = 0; i < t; ++i) {
    out << i;
    for (std::size_t j = 0; j < t; ++j) out << "," << format_double(m.R[i][j]);
    out << "\n";
  }
  return out.str();
}

AccuracyMatrix accuracy_matrix_from_csv(const std::vector<std::string>& lines) {
  if (lines.size() < 2) throw invalid_input("accuracy matrix CSV: too few lines");
  const auto header = split_csv_line(lines[0]);
  if (header.empty() || header[0] != "phase") {
    throw invalid_input("accuracy matrix CSV: bad header");
  }
  const std::size_t t = header.size() - 1;
  AccuracyMatrix m;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const auto fields = split_csv_line(lines[li]);
    if (fields.size() != t + 1) throw invalid_input("accuracy matrix CSV: ragged row");
    std::vector<double> row(t);
    for (std::size_t j = 0; j < t; ++j) row[j] = parse_double(fields[j + 1]);
    if (fields[0] == "init") {
      m.b = std::move(row);
    } else {
      m.R.push_back(std::move(row));
    }
  }
  if (m.R.size() != t) throw invalid_input("accuracy matrix CSV: row/column mismatch");
  return m;
}

long ConfusionCounts::total() const {
  long n = 0;
  for (const auto& row : counts) {
    for (long c : row) n += c;
  }
  return n;
}

void ConfusionCounts::add(int truth, int predicted) {
  counts.at(static_cast<std::size_t>(truth)).at(static_cast<std::size_t>(predicted)) += 1;
}

ConfusionCounts confusion_from_predictions(const std::vector<int>& truth,
                                           const std::vector<int>& predicted,
                                           std::size_t num_classes) {
  if (truth.size() != predicted.size()) {
    throw invalid_input("confusion_from_predictions: length mismatch");
  }
  ConfusionCounts c(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) c.add(truth[i], predicted[i]);
  return c;
}

double macro_f1(const ConfusionCounts& c) {
  const std::size_t k = c.num_classes();
  if (c.total() == 0) throw invalid_input("macro_f1: empty counts");
  double sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    long tp = c.counts[j][j];
    long truth_total = 0;
    long pred_total = 0;
    for (std::size_t i = 0; i < k; ++i) {
      truth_total += c.counts[j][i];
      pred_total += c.counts[i][j];
    }
    if (truth_total == 0 && pred_total == 0) continue;  // contributes 0
    const double precision = pred_total > 0 ? static_cast<double>(tp) / pred_total : 0.0;
    const double recall = truth_total > 0 ? static_cast<double>(tp) / truth_total : 0.0;
    if (precision + recall > 0.0) {
      sum += 2.0 * precision * recall / (precision + recall);
    }
  }
  return sum / static_cast<double>(k);
}

double accuracy_from_predictions(const std::vector<int>& truth,
                                 const std::vector<int>& predicted) {
  if (truth.size() != predicted.size() || truth.empty()) {
    throw invalid_input("accuracy_from_predictions: bad inputs");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == predicted[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace clreg
