#pragma once

#include <array>
#include <span>
#include <string>

#include <json.hpp>

#include "ontogen/errors.hpp"
#include "ontogen/relation.hpp"

namespace ontogen {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// confusion[gold][predicted]
using ConfusionMatrix = std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses>;

struct EvalReport {
  ConfusionMatrix confusion{};
  double accuracy = 0.0;
  std::array<ClassMetrics, kNumClasses> per_class{};
  double macro_f1 = 0.0;
  std::uint64_t total = 0;
};

/// Derives all metrics from a confusion matrix. Zero denominators give 0.
inline EvalReport report_from_confusion(const ConfusionMatrix& cm) {
  EvalReport r;
  r.confusion = cm;
  std::uint64_t correct = 0;
  for (std::size_t g = 0; g < kNumClasses; ++g)
    for (std::size_t p = 0; p < kNumClasses; ++p) {
      r.total += cm[g][p];
      if (g == p) correct += cm[g][p];
    }
  r.accuracy = r.total ? static_cast<double>(correct) / static_cast<double>(r.total) : 0.0;
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::uint64_t predicted = 0, actual = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      predicted += cm[k][c];
      actual += cm[c][k];
    }
    const double tp = static_cast<double>(cm[c][c]);
    auto& m = r.per_class[c];
    m.precision = predicted ? tp / static_cast<double>(predicted) : 0.0;
    m.recall = actual ? tp / static_cast<double>(actual) : 0.0;
    m.f1 = (m.precision + m.recall) > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    f1_sum += m.f1;
  }
  r.macro_f1 = f1_sum / static_cast<double>(kNumClasses);
  return r;
}

inline EvalReport evaluate_predictions(std::span<const RelationClass> gold, std::span<const RelationClass> predicted) {
  if (gold.size() != predicted.size()) throw ConfigError("gold and predicted lengths differ");
  ConfusionMatrix cm{};
  for (std::size_t i = 0; i < gold.size(); ++i) ++cm[index_of(gold[i])][index_of(predicted[i])];
  return report_from_confusion(cm);
}

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  j["accuracy"] = r.accuracy;
  j["macro_f1"] = r.macro_f1;
  j["total"] = r.total;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto name = std::string(to_string(class_at(c)));
    j["per_class"][name] = {{"precision", r.per_class[c].precision},
                            {"recall", r.per_class[c].recall},
                            {"f1", r.per_class[c].f1}};
  }
  j["confusion"] = r.confusion;
  j["confusion_axes"] = "rows=gold, columns=predicted, order=supertopic,subtopic,same-as,other";
}

}  // namespace ontogen
