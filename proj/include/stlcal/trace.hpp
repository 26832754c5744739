#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace stlcal {

// Stepwise confidence signal: per-segment mean token probability, its
// first-order difference (diff[0] == 0), and any lifted robustness channels
// appended during mining.
struct ConfidenceSignal {
  std::vector<double> values;
  std::vector<double> diff;
  std::vector<std::pair<std::string, std::vector<double>>> lifted;

  std::size_t size() const { return values.size(); }

  static ConfidenceSignal from_values(std::vector<double> v);
};

// One labeled record: question, optional raw segments, the derived signal,
// and the binary correctness label.
struct LabeledInstance {
  std::string id;
  std::string task;
  std::string question;
  std::vector<std::vector<double>> segments;  // empty when the file carried a signal
  ConfidenceSignal signal;
  int label = 0;
};

using Dataset = std::vector<LabeledInstance>;

enum class SegmentationMode { Sentence, FixedLength };

struct SegmentationOptions {
  SegmentationMode mode = SegmentationMode::Sentence;
  std::size_t fixed_length = 20;
};

// Splits a token-probability sequence into segments. Sentence mode needs the
// token texts and breaks after '.', '!', '?' or a newline; fixed mode chunks
// every fixed_length tokens with a shorter trailing segment.
std::vector<std::vector<double>> segment_response(
    const std::vector<double>& token_probs, const SegmentationOptions& opts,
    const std::vector<std::string>* token_texts = nullptr);

// Mean token probability per segment, plus the derived difference channel.
ConfidenceSignal compute_signal(const std::vector<std::vector<double>>& segments);

// Reads the JSONL dataset format; malformed lines report their line number.
Dataset load_dataset(const std::filesystem::path& path);

void save_dataset(const std::filesystem::path& path, const Dataset& data);

bool has_both_classes(const Dataset& data);

}  // namespace stlcal
