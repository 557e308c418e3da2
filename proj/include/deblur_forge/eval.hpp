#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dforge {

/// Decodes UTF-8 into Unicode scalar values; malformed sequences become
/// U+FFFD, one per offending byte.
std::u32string utf8_to_scalars(std::string_view text);

/// Unit-cost edit distance over Unicode scalar values.
std::size_t levenshtein(std::u32string_view a, std::u32string_view b);
std::size_t levenshtein(std::string_view a, std::string_view b);

/// Collapses whitespace runs to one space and strips both ends.
std::string normalize_whitespace(std::string_view text);

struct OcrScore {
  std::size_t distance = 0;
  std::size_t gt_len = 0;
  std::size_t ocr_len = 0;
  double score = 0.0;  // 100 * (1 - distance / max(gt_len, ocr_len, 1))
};

OcrScore ocr_score(std::string_view ground_truth, std::string_view recognized);

inline constexpr const char* kOcrCommandEnv = "DEBLUR_FORGE_OCR_CMD";

class OcrError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OcrResult {
  bool available = false;  // false: no engine configured, text is empty
  std::string text;
};

/// Runs `command` through /bin/sh with every "{input}" replaced by the
/// shell-quoted image path and returns its stdout with trailing whitespace
/// removed. Nonzero exit or timeout throws OcrError carrying stderr.
std::string run_ocr_command(const std::string& command, const std::filesystem::path& image,
                            std::chrono::milliseconds timeout = std::chrono::seconds(60));

/// Uses the command template in $DEBLUR_FORGE_OCR_CMD (or `command` when
/// given); reports available = false instead of failing when neither is set.
OcrResult run_external_ocr(const std::filesystem::path& image,
                           const std::optional<std::string>& command = std::nullopt,
                           std::chrono::milliseconds timeout = std::chrono::seconds(60));

}  // namespace dforge
