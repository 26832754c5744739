#include "stlcal/trace.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "stlcal/errors.hpp"

namespace stlcal {

using nlohmann::json;

ConfidenceSignal ConfidenceSignal::from_values(std::vector<double> v) {
  if (v.empty()) throw EmptyTrace("signal must contain at least one step");
  ConfidenceSignal s;
  s.diff.resize(v.size());
  s.diff[0] = 0.0;
  for (std::size_t t = 1; t < v.size(); ++t) s.diff[t] = v[t] - v[t - 1];
  s.values = std::move(v);
  return s;
}

std::vector<std::vector<double>> segment_response(
    const std::vector<double>& token_probs, const SegmentationOptions& opts,
    const std::vector<std::string>* token_texts) {
  if (token_probs.empty()) throw EmptyTrace("empty token sequence");

  std::vector<std::vector<double>> segments;
  if (opts.mode == SegmentationMode::Sentence) {
    if (token_texts == nullptr) {
      throw SchemaError("sentence segmentation requires token texts");
    }
    if (token_texts->size() != token_probs.size()) {
      throw SchemaError("token texts and probabilities differ in length");
    }
    std::vector<double> current;
    for (std::size_t i = 0; i < token_probs.size(); ++i) {
      current.push_back(token_probs[i]);
      const std::string& text = (*token_texts)[i];
      const bool boundary =
          !text.empty() && (text.back() == '.' || text.back() == '!' ||
                            text.back() == '?' || text.back() == '\n');
      if (boundary) {
        segments.push_back(std::move(current));
        current.clear();
      }
    }
    if (!current.empty()) segments.push_back(std::move(current));
  } else {
    const std::size_t len = opts.fixed_length == 0 ? 1 : opts.fixed_length;
    for (std::size_t i = 0; i < token_probs.size(); i += len) {
      const std::size_t end = std::min(i + len, token_probs.size());
      segments.emplace_back(token_probs.begin() + i, token_probs.begin() + end);
    }
  }
  return segments;
}

ConfidenceSignal compute_signal(const std::vector<std::vector<double>>& segments) {
  if (segments.empty()) throw EmptyTrace("no segments");
  std::vector<double> values;
  values.reserve(segments.size());
  for (const auto& seg : segments) {
    if (seg.empty()) throw EmptyTrace("empty segment");
    double sum = 0.0;
    for (double p : seg) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw SchemaError("token probability outside [0, 1]");
      }
      sum += p;
    }
    values.push_back(sum / static_cast<double>(seg.size()));
  }
  return ConfidenceSignal::from_values(std::move(values));
}

namespace {

LabeledInstance parse_record(const json& j, std::size_t line_no) {
  auto fail = [line_no](const std::string& what) -> SchemaError {
    return SchemaError("line " + std::to_string(line_no) + ": " + what);
  };
  if (!j.is_object()) throw fail("record is not an object");
  for (const char* key : {"id", "task", "question", "label"}) {
    if (!j.contains(key)) throw fail(std::string("missing field \"") + key + "\"");
  }

  LabeledInstance inst;
  if (!j["id"].is_string() || !j["task"].is_string() || !j["question"].is_string()) {
    throw fail("id/task/question must be strings");
  }
  inst.id = j["id"].get<std::string>();
  inst.task = j["task"].get<std::string>();
  inst.question = j["question"].get<std::string>();

  if (!j["label"].is_number_integer()) throw fail("label must be 0 or 1");
  const int label = j["label"].get<int>();
  if (label != 0 && label != 1) throw fail("label must be 0 or 1");
  inst.label = label;

  const bool has_segments = j.contains("segments") && !j["segments"].is_null();
  const bool has_signal = j.contains("signal") && !j["signal"].is_null();
  if (has_segments == has_signal) {
    throw fail("exactly one of segments/signal must be non-null");
  }

  try {
    if (has_segments) {
      inst.segments = j["segments"].get<std::vector<std::vector<double>>>();
      inst.signal = compute_signal(inst.segments);
    } else {
      auto values = j["signal"].get<std::vector<double>>();
      for (double v : values) {
        if (!(v >= 0.0 && v <= 1.0)) throw SchemaError("signal value outside [0, 1]");
      }
      inst.signal = ConfidenceSignal::from_values(std::move(values));
    }
  } catch (const json::exception&) {
    throw fail("segments/signal must be arrays of numbers");
  } catch (const SchemaError& e) {
    throw fail(e.what());
  } catch (const EmptyTrace& e) {
    throw fail(e.what());
  }
  return inst;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open dataset file: " + path.string());

  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw SchemaError("line " + std::to_string(line_no) + ": invalid JSON");
    }
    data.push_back(parse_record(j, line_no));
  }
  return data;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write dataset file: " + path.string());
  for (const auto& inst : data) {
    json j;
    j["id"] = inst.id;
    j["task"] = inst.task;
    j["question"] = inst.question;
    if (!inst.segments.empty()) {
      j["segments"] = inst.segments;
      j["signal"] = nullptr;
    } else {
      j["segments"] = nullptr;
      j["signal"] = inst.signal.values;
    }
    j["label"] = inst.label;
    out << j.dump() << "\n";
  }
}

bool has_both_classes(const Dataset& data) {
  bool pos = false, neg = false;
  for (const auto& inst : data) (inst.label ? pos : neg) = true;
  return pos && neg;
}

}  // namespace stlcal
