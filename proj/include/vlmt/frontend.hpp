#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "vlmt/tensor.hpp"

namespace vlmt::frontend {

/// Axis-aligned box in normalized image coordinates. x/y is the top-left
/// corner; the box must satisfy x+w <= 1 and y+h <= 1 with positive extent.
struct BBox {
  double x = 0, y = 0, w = 0, h = 0;
  void validate() const;
  double cx() const { return x + w / 2.0; }
  double cy() const { return y + h / 2.0; }
};

struct SceneObject {
  int class_id = 0;
  BBox bbox;
};

/// One symbolic frame: detected object instances plus the user instruction
/// and the reference output text (description, optionally followed by a
/// "suggest:" segment).
struct Scene {
  std::string scene_id;
  std::vector<SceneObject> objects;
  std::string instruction;
  std::string target;
  bool expects_trigger = false;
};

/// Token <-> id map with fixed reserved ids. The "suggest:" marker word is a
/// reserved token so the proactive segment survives tokenization intact.
class Vocabulary {
 public:
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kBos = 1;
  static constexpr int32_t kEos = 2;
  static constexpr int32_t kUnk = 3;
  static constexpr int32_t kSuggest = 4;
  static constexpr size_t kNumReserved = 5;
  static const char* suggest_word();  // "suggest:"

  Vocabulary();  // reserved tokens only
  /// From a full id-ordered token list whose first five entries must be the
  /// reserved tokens.
  explicit Vocabulary(std::vector<std::string> tokens);
  /// Reserved tokens plus the sorted unique normalized words of `texts`.
  static Vocabulary build(const std::vector<std::string>& texts);

  int32_t id(const std::string& token) const;            // kUnk if absent
  const std::string& token(int32_t id) const;
  size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::string& path) const;  // JSON list in id order
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int32_t> ids_;
};

/// Lowercases, splits on whitespace, and separates punctuation into its own
/// tokens. "suggest:" is kept whole.
std::vector<std::string> normalize_words(const std::string& text);

/// Normalized words mapped to ids (OOV -> UNK) and wrapped in BOS/EOS.
std::vector<int32_t> tokenize(const std::string& text, const Vocabulary& vocab);

/// Tokens joined by spaces, dropping PAD/BOS/EOS.
std::string detokenize(const std::vector<int32_t>& ids,
                       const Vocabulary& vocab);

/// Sinusoidal position encoding: pe[2i] = sin(pos/10000^(2i/d)),
/// pe[2i+1] = cos(pos/10000^(2i/d)). d_model must be even.
std::vector<double> sinusoidal_pe(size_t position, size_t d_model);

/// Constant [len, d_model] matrix of sinusoidal encodings for positions
/// 0..len-1.
template <typename T>
Tensor<T> pe_matrix(size_t len, size_t d_model);

/// Spatial encoding of the box center: the first d_v/2 dims encode cx and the
/// rest encode cy, each with the sinusoidal ladder at width d_v/2. d_v must
/// be divisible by 4.
std::vector<double> pos2d_embedding(const BBox& bbox, size_t d_v);

template <typename T>
struct RegionFeature {
  int class_id = 0;
  std::vector<T> feature;  // length d_v
  std::vector<T> pos2d;    // length d_v
};

/// Gaussian jitter applied to a class prototype for one region. Region r of a
/// scene uses the stream fork(seed, r), so features are pure in (seed, r).
template <typename T>
std::vector<T> region_jitter(uint64_t seed, size_t region_index, size_t d_v,
                             double sigma);

/// Synthetic region features: prototype_table[class_id] + seeded jitter, plus
/// the 2D position encoding of the box. The feature length is the prototype
/// width regardless of box size.
template <typename T>
std::vector<RegionFeature<T>> featurize(const Scene& scene,
                                        const Tensor<T>& prototype_table,
                                        uint64_t noise_seed, double sigma);

/// Stable per-scene stream for featurize noise.
uint64_t scene_noise_seed(const std::string& scene_id);

// --- scene JSONL -------------------------------------------------------------

Scene scene_from_json_line(const std::string& line, size_t line_no);
std::string scene_to_json_line(const Scene& scene);
std::vector<Scene> read_scenes_jsonl(const std::string& path);
void write_scenes_jsonl(const std::string& path,
                        const std::vector<Scene>& scenes);

}  // namespace vlmt::frontend
