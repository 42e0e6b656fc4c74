#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace clreg {

// Train-test accuracy record: R[i][j] is the test accuracy on task j after
// completing training on tasks 0..i, and b[j] is the test accuracy of the
// randomly initialized model on task j (measured once, before any training).
struct AccuracyMatrix {
  std::vector<std::vector<double>> R;
  std::vector<double> b;

  std::size_t task_count() const { return R.size(); }
};

// Average accuracy over all tasks after the final training phase.
double final_acc(const AccuracyMatrix& m);

// Average over phases i of the mean accuracy on tasks seen so far.
double mean_acc(const AccuracyMatrix& m);

// Mean change of past-task accuracy between when it was learnt and the end
// of the stream. Requires T >= 2.
double bwt(const AccuracyMatrix& m);

// Mean zero-shot accuracy on each task just before learning it, relative to
// the random-initialization baseline b. Requires T >= 2.
double fwt(const AccuracyMatrix& m);

std::string accuracy_matrix_to_csv(const AccuracyMatrix& m);
AccuracyMatrix accuracy_matrix_from_csv(const std::vector<std::string>& lines);

// K x K counts, rows = true class, cols = predicted class.
struct ConfusionCounts {
  std::vector<std::vector<long>> counts;

  explicit ConfusionCounts(std::size_t k = 0)
      : counts(k, std::vector<long>(k, 0)) {}
  std::size_t num_classes() const { return counts.size(); }
  long total() const;
  void add(int truth, int predicted);
};

ConfusionCounts confusion_from_predictions(const std::vector<int>& truth,
                                           const std::vector<int>& predicted,
                                           std::size_t num_classes);

// Macro-averaged F1; a class with neither true nor predicted samples
// contributes 0.
double macro_f1(const ConfusionCounts& c);

double accuracy_from_predictions(const std::vector<int>& truth,
                                 const std::vector<int>& predicted);

}  // namespace clreg
