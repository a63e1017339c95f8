#include "vlmt/frontend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace vlmt::frontend {

using nlohmann::json;

void BBox::validate() const {
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in01(x) || !in01(y) || !in01(w) || !in01(h) || w <= 0.0 || h <= 0.0 ||
      x + w > 1.0 + 1e-9 || y + h > 1.0 + 1e-9) {
    std::ostringstream os;
    os << "bbox outside [0,1]: [" << x << "," << y << "," << w << "," << h
       << "]";
    throw ValidationError(os.str());
  }
}

// --- vocabulary ----------------------------------------------------------

const char* Vocabulary::suggest_word() { return "suggest:"; }

namespace {
const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> r = {"<pad>", "<bos>", "<eos>",
                                             "<unk>", "suggest:"};
  return r;
}
}  // namespace

Vocabulary::Vocabulary() : Vocabulary(reserved_tokens()) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens)
    : tokens_(std::move(tokens)) {
  if (tokens_.size() < kNumReserved) {
    throw ValidationError("vocabulary: missing reserved tokens");
  }
  for (size_t i = 0; i < kNumReserved; ++i) {
    if (tokens_[i] != reserved_tokens()[i]) {
      throw ValidationError("vocabulary: token " + std::to_string(i) +
                            " must be '" + reserved_tokens()[i] + "', got '" +
                            tokens_[i] + "'");
    }
  }
  for (size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = ids_.emplace(tokens_[i], static_cast<int32_t>(i));
    if (!inserted) {
      throw ValidationError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
  std::set<std::string> words;
  for (const auto& t : texts) {
    for (const auto& w : normalize_words(t)) words.insert(w);
  }
  std::vector<std::string> tokens = reserved_tokens();
  for (const auto& w : words) {
    if (w != suggest_word()) tokens.push_back(w);
  }
  return Vocabulary(std::move(tokens));
}

int32_t Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int32_t id) const {
  if (id < 0 || static_cast<size_t>(id) >= tokens_.size()) {
    throw IndexError("vocabulary: id " + std::to_string(id) +
                     " outside size " + std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<size_t>(id)];
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ValidationError("vocabulary: cannot write " + path);
  out << json(tokens_).dump(2) << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("vocabulary: cannot read " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError("vocabulary: " + path + ": " + e.what());
  }
  return Vocabulary(doc.get<std::vector<std::string>>());
}

// --- tokenizer ------------------------------------------------------------

std::vector<std::string> normalize_words(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string raw;
  while (is >> raw) {
    std::string lowered;
    lowered.reserve(raw.size());
    for (char c : raw) {
      lowered.push_back(
          static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (lowered == Vocabulary::suggest_word()) {
      out.push_back(lowered);
      continue;
    }
    std::string word;
    for (char c : lowered) {
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '\'') {
        word.push_back(c);
      } else {
        if (!word.empty()) out.push_back(std::exchange(word, {}));
        out.push_back(std::string(1, c));  // punctuation as its own token
      }
    }
    if (!word.empty()) out.push_back(word);
  }
  return out;
}

std::vector<int32_t> tokenize(const std::string& text,
                              const Vocabulary& vocab) {
  std::vector<int32_t> ids;
  ids.push_back(Vocabulary::kBos);
  for (const auto& w : normalize_words(text)) ids.push_back(vocab.id(w));
  ids.push_back(Vocabulary::kEos);
  return ids;
}

std::string detokenize(const std::vector<int32_t>& ids,
                       const Vocabulary& vocab) {
  std::string out;
  for (int32_t id : ids) {
    if (id == Vocabulary::kPad || id == Vocabulary::kBos ||
        id == Vocabulary::kEos) {
      continue;
    }
    if (!out.empty()) out.push_back(' ');
    out += vocab.token(id);
  }
  return out;
}

// --- positional encodings ---------------------------------------------------

namespace {
void fill_sinusoid(double pos, size_t d, std::vector<double>& out,
                   size_t offset) {
  for (size_t i = 0; 2 * i < d; ++i) {
    double freq = std::pow(10000.0, static_cast<double>(2 * i) /
                                        static_cast<double>(d));
    out[offset + 2 * i] = std::sin(pos / freq);
    if (2 * i + 1 < d) out[offset + 2 * i + 1] = std::cos(pos / freq);
  }
}
}  // namespace

std::vector<double> sinusoidal_pe(size_t position, size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0) {
    throw ContractError("sinusoidal_pe: d_model must be even and positive");
  }
  std::vector<double> out(d_model);
  fill_sinusoid(static_cast<double>(position), d_model, out, 0);
  return out;
}

template <typename T>
Tensor<T> pe_matrix(size_t len, size_t d_model) {
  std::vector<T> v(len * d_model);
  for (size_t p = 0; p < len; ++p) {
    std::vector<double> row = sinusoidal_pe(p, d_model);
    for (size_t j = 0; j < d_model; ++j) {
      v[p * d_model + j] = static_cast<T>(row[j]);
    }
  }
  return Tensor<T>(Shape{len, d_model}, std::move(v));
}

template Tensor<float> pe_matrix(size_t, size_t);
template Tensor<double> pe_matrix(size_t, size_t);

std::vector<double> pos2d_embedding(const BBox& bbox, size_t d_v) {
  if (d_v == 0 || d_v % 4 != 0) {
    throw ContractError("pos2d_embedding: d_v must be divisible by 4");
  }
  bbox.validate();
  size_t half = d_v / 2;
  std::vector<double> out(d_v);
  fill_sinusoid(bbox.cx(), half, out, 0);
  fill_sinusoid(bbox.cy(), half, out, half);
  return out;
}

// --- featurizer ---------------------------------------------------------------

uint64_t scene_noise_seed(const std::string& scene_id) {
  return fnv1a64(scene_id);
}

template <typename T>
std::vector<T> region_jitter(uint64_t seed, size_t region_index, size_t d_v,
                             double sigma) {
  Rng rng(Rng::mix(seed, region_index));
  std::vector<T> out(d_v, T(0));
  if (sigma == 0.0) return out;
  for (size_t i = 0; i < d_v; ++i) {
    out[i] = static_cast<T>(sigma * rng.normal());
  }
  return out;
}

template std::vector<float> region_jitter(uint64_t, size_t, size_t, double);
template std::vector<double> region_jitter(uint64_t, size_t, size_t, double);

template <typename T>
std::vector<RegionFeature<T>> featurize(const Scene& scene,
                                        const Tensor<T>& prototype_table,
                                        uint64_t noise_seed, double sigma) {
  size_t n_classes = prototype_table.rows();
  size_t d_v = prototype_table.cols();
  const auto& table = prototype_table.values();
  std::vector<RegionFeature<T>> out;
  out.reserve(scene.objects.size());
  for (size_t r = 0; r < scene.objects.size(); ++r) {
    const SceneObject& obj = scene.objects[r];
    if (obj.class_id < 0 ||
        static_cast<size_t>(obj.class_id) >= n_classes) {
      throw IndexError("featurize: class id " + std::to_string(obj.class_id) +
                       " outside prototype table of " +
                       std::to_string(n_classes) + " classes");
    }
    RegionFeature<T> rf;
    rf.class_id = obj.class_id;
    std::vector<T> noise = region_jitter<T>(noise_seed, r, d_v, sigma);
    rf.feature.resize(d_v);
    size_t base = static_cast<size_t>(obj.class_id) * d_v;
    for (size_t j = 0; j < d_v; ++j) rf.feature[j] = table[base + j] + noise[j];
    std::vector<double> pos = pos2d_embedding(obj.bbox, d_v);
    rf.pos2d.assign(pos.begin(), pos.end());
    out.push_back(std::move(rf));
  }
  return out;
}

template std::vector<RegionFeature<float>> featurize(const Scene&,
                                                     const Tensor<float>&,
                                                     uint64_t, double);
template std::vector<RegionFeature<double>> featurize(const Scene&,
                                                      const Tensor<double>&,
                                                      uint64_t, double);

// --- scene JSONL ---------------------------------------------------------------

Scene scene_from_json_line(const std::string& line, size_t line_no) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::exception& e) {
    throw ValidationError("scene line " + std::to_string(line_no) + ": " +
                          e.what());
  }
  Scene s;
  try {
    s.scene_id = doc.at("scene_id").get<std::string>();
    s.instruction = doc.at("instruction").get<std::string>();
    s.target = doc.at("target").get<std::string>();
    s.expects_trigger = doc.at("expects_trigger").get<bool>();
    for (const auto& o : doc.at("objects")) {
      SceneObject obj;
      obj.class_id = o.at("class_id").get<int>();
      const auto& bb = o.at("bbox");
      if (bb.size() != 4) {
        throw ValidationError("scene line " + std::to_string(line_no) +
                              ": objects.bbox must have 4 entries");
      }
      obj.bbox = BBox{bb.at(0).get<double>(), bb.at(1).get<double>(),
                      bb.at(2).get<double>(), bb.at(3).get<double>()};
      obj.bbox.validate();
      s.objects.push_back(obj);
    }
  } catch (const json::exception& e) {
    throw ValidationError("scene line " + std::to_string(line_no) + ": " +
                          e.what());
  }
  if (s.target.empty()) {
    throw ValidationError("scene line " + std::to_string(line_no) + " (" +
                          s.scene_id + "): empty target");
  }
  return s;
}

std::string scene_to_json_line(const Scene& scene) {
  json objs = json::array();
  for (const auto& o : scene.objects) {
    objs.push_back({{"class_id", o.class_id},
                    {"bbox", {o.bbox.x, o.bbox.y, o.bbox.w, o.bbox.h}}});
  }
  json doc = {{"scene_id", scene.scene_id},
              {"objects", objs},
              {"instruction", scene.instruction},
              {"target", scene.target},
              {"expects_trigger", scene.expects_trigger}};
  return doc.dump();
}

std::vector<Scene> read_scenes_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("scenes: cannot read " + path);
  std::vector<Scene> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    out.push_back(scene_from_json_line(line, line_no));
  }
  return out;
}

void write_scenes_jsonl(const std::string& path,
                        const std::vector<Scene>& scenes) {
  std::ofstream out(path);
  if (!out) throw ValidationError("scenes: cannot write " + path);
  for (const auto& s : scenes) out << scene_to_json_line(s) << "\n";
}

}  // namespace vlmt::frontend
