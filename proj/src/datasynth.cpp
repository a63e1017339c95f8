#include "vlmt/datasynth.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "vlmt/rng.hpp"

namespace vlmt::datasynth {

using nlohmann::json;
namespace fs = std::filesystem;

// --- world spec -----------------------------------------------------------

namespace {

std::set<int> union_of(const TaskTemplate& t) {
  std::set<int> u(t.required.begin(), t.required.end());
  u.insert(t.distractors.begin(), t.distractors.end());
  return u;
}

bool contains_all(const std::set<int>& super, const std::set<int>& sub) {
  return std::includes(super.begin(), super.end(), sub.begin(), sub.end());
}

}  // namespace

void WorldSpec::validate() const {
  if (class_names.empty()) throw ValidationError("world spec: no classes");
  std::set<std::string> seen;
  for (const auto& n : class_names) {
    if (!seen.insert(n).second) {
      throw ValidationError("world spec: duplicate class name '" + n + "'");
    }
  }
  if (trigger_rate < 0.0 || trigger_rate > 1.0) {
    throw ValidationError("world spec: trigger_rate outside [0,1]");
  }
  auto check_class = [&](int c, const std::string& where) {
    if (c < 0 || static_cast<size_t>(c) >= class_names.size()) {
      throw ValidationError("world spec: " + where + " references unknown class id " +
                            std::to_string(c));
    }
  };
  for (size_t r = 0; r < intent_rules.size(); ++r) {
    if (intent_rules[r].trigger.empty()) {
      throw ValidationError("world spec: rule " + std::to_string(r) +
                            " has an empty trigger set");
    }
    if (intent_rules[r].suggestion.empty()) {
      throw ValidationError("world spec: rule " + std::to_string(r) +
                            " has an empty suggestion");
    }
    for (int c : intent_rules[r].trigger) {
      check_class(c, "rule " + std::to_string(r));
    }
  }
  if (templates.empty()) throw ValidationError("world spec: no templates");
  bool any_proactive = false, any_neutral = false;
  for (const auto& t : templates) {
    for (int c : t.required) check_class(c, "template '" + t.name + "'");
    for (int c : t.distractors) check_class(c, "template '" + t.name + "'");
    if (t.required.empty()) {
      throw ValidationError("world spec: template '" + t.name +
                            "' requires no objects");
    }
    if (t.instruction_pattern.empty() || t.description_pattern.empty()) {
      throw ValidationError("world spec: template '" + t.name +
                            "' is missing a text pattern");
    }
    std::set<int> worst = union_of(t);
    if (t.rule >= 0) {
      any_proactive = true;
      if (static_cast<size_t>(t.rule) >= intent_rules.size()) {
        throw ValidationError("world spec: template '" + t.name +
                              "' references unknown rule " +
                              std::to_string(t.rule));
      }
      std::set<int> req(t.required.begin(), t.required.end());
      if (!contains_all(req, intent_rules[t.rule].trigger)) {
        throw ValidationError("world spec: template '" + t.name +
                              "' does not require its rule's trigger set");
      }
      // No earlier rule may become matchable, or the first-match suggestion
      // would diverge from the designated one.
      for (int r = 0; r < t.rule; ++r) {
        if (contains_all(worst, intent_rules[r].trigger)) {
          throw ValidationError("world spec: template '" + t.name +
                                "' can complete earlier rule " +
                                std::to_string(r));
        }
      }
    } else {
      any_neutral = true;
      for (size_t r = 0; r < intent_rules.size(); ++r) {
        if (contains_all(worst, intent_rules[r].trigger)) {
          throw ValidationError("world spec: neutral template '" + t.name +
                                "' can complete rule " + std::to_string(r));
        }
      }
    }
  }
  if (trigger_rate > 0.0 && !any_proactive) {
    throw ValidationError("world spec: trigger_rate > 0 needs a proactive template");
  }
  if (trigger_rate < 1.0 && !any_neutral) {
    throw ValidationError("world spec: trigger_rate < 1 needs a neutral template");
  }
}

namespace {

int class_id_of(const std::vector<std::string>& names, const json& v,
                const std::string& where) {
  std::string name = v.get<std::string>();
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    throw ValidationError("world spec: " + where + " references unknown class '" +
                          name + "'");
  }
  return static_cast<int>(it - names.begin());
}

}  // namespace

json WorldSpec::to_json() const {
  json rules = json::array();
  for (const auto& r : intent_rules) {
    json trig = json::array();
    for (int c : r.trigger) trig.push_back(class_names[static_cast<size_t>(c)]);
    rules.push_back({{"trigger", trig}, {"suggestion", r.suggestion}});
  }
  json tmpls = json::array();
  for (const auto& t : templates) {
    json req = json::array(), dis = json::array();
    for (int c : t.required) req.push_back(class_names[static_cast<size_t>(c)]);
    for (int c : t.distractors) dis.push_back(class_names[static_cast<size_t>(c)]);
    tmpls.push_back({{"name", t.name},
                     {"required", req},
                     {"distractors", dis},
                     {"max_distractors", t.max_distractors},
                     {"rule", t.rule},
                     {"instruction", t.instruction_pattern},
                     {"description", t.description_pattern}});
  }
  return json{{"class_names", class_names},
              {"intent_rules", rules},
              {"templates", tmpls},
              {"trigger_rate", trigger_rate}};
}

WorldSpec WorldSpec::from_json(const json& doc) {
  WorldSpec spec;
  try {
    spec.class_names = doc.at("class_names").get<std::vector<std::string>>();
    spec.trigger_rate = doc.at("trigger_rate").get<double>();
    for (const auto& r : doc.at("intent_rules")) {
      IntentRule rule;
      for (const auto& c : r.at("trigger")) {
        rule.trigger.insert(class_id_of(spec.class_names, c, "intent rule"));
      }
      rule.suggestion = r.at("suggestion").get<std::string>();
      spec.intent_rules.push_back(std::move(rule));
    }
    for (const auto& t : doc.at("templates")) {
      TaskTemplate tmpl;
      tmpl.name = t.at("name").get<std::string>();
      for (const auto& c : t.at("required")) {
        tmpl.required.push_back(
            class_id_of(spec.class_names, c, "template '" + tmpl.name + "'"));
      }
      for (const auto& c : t.at("distractors")) {
        tmpl.distractors.push_back(
            class_id_of(spec.class_names, c, "template '" + tmpl.name + "'"));
      }
      tmpl.max_distractors = t.at("max_distractors").get<size_t>();
      tmpl.rule = t.at("rule").get<int>();
      tmpl.instruction_pattern = t.at("instruction").get<std::string>();
      tmpl.description_pattern = t.at("description").get<std::string>();
      spec.templates.push_back(std::move(tmpl));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("world spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

WorldSpec WorldSpec::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("world spec: cannot read " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ValidationError("world spec: " + path + ": " + e.what());
  }
  return from_json(doc);
}

uint64_t WorldSpec::hash() const { return fnv1a64(to_json().dump()); }

WorldSpec default_world_spec() {
  // Class ids:    0      1        2        3      4       5      6    7
  //               cup    kettle   teabag   knife  bread   plate  pan  egg
  //               8      9        10       11
  //               bowl   spoon    jar      sponge
  WorldSpec spec;
  spec.class_names = {"cup",  "kettle", "teabag", "knife", "bread", "plate",
                      "pan",  "egg",    "bowl",   "spoon", "jar",   "sponge"};
  spec.trigger_rate = 0.5;
  spec.intent_rules = {
      {{0, 1}, "boil water for tea"},
      {{1, 2}, "steep the teabag"},
      {{3, 4}, "slice the bread"},
      {{6, 7}, "fry the egg"},
  };
  const std::string instr = "hand me the {anchor}";
  const std::string desc = "there is {objects} on the counter";
  // Proactive templates carry one full trigger pair; neutral templates use a
  // single anchor class, so near-miss pairs only co-occur through rare
  // distractor draws and the graph separates rule pairs from the rest.
  spec.templates = {
      {"tea", {0, 1}, {5, 9, 10, 11, 8}, 2, 0, instr, desc},
      {"steep", {1, 2}, {5, 10, 11, 8}, 2, 1, instr, desc},
      {"slice", {3, 4}, {5, 10, 11, 0}, 2, 2, instr, desc},
      {"fry", {6, 7}, {8, 9, 10, 11}, 2, 3, instr, desc},
      {"cup-idle", {0}, {2, 5, 10, 11}, 2, -1, instr, desc},
      {"knife-idle", {3}, {5, 10, 8, 11}, 2, -1, instr, desc},
      {"pan-idle", {6}, {4, 8, 10, 9}, 2, -1, instr, desc},
      {"egg-idle", {7}, {8, 9, 10, 11}, 2, -1, instr, desc},
  };
  spec.validate();
  return spec;
}

std::optional<size_t> match_rule(const WorldSpec& spec,
                                 const std::set<int>& classes) {
  for (size_t r = 0; r < spec.intent_rules.size(); ++r) {
    if (contains_all(classes, spec.intent_rules[r].trigger)) return r;
  }
  return std::nullopt;
}

// --- generation -----------------------------------------------------------

namespace {

std::string article_for(const std::string& noun) {
  if (noun.empty()) return "a";
  switch (noun[0]) {
    case 'a': case 'e': case 'i': case 'o': case 'u':
      return "an";
    default:
      return "a";
  }
}

std::string render_objects(const WorldSpec& spec, std::vector<int> ids) {
  std::sort(ids.begin(), ids.end());
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    const std::string& name = spec.class_names[static_cast<size_t>(ids[i])];
    if (i) out += " and ";
    out += article_for(name) + " " + name;
  }
  return out;
}

std::string substitute(std::string pattern, const std::string& key,
                       const std::string& value) {
  size_t pos = pattern.find(key);
  if (pos != std::string::npos) pattern.replace(pos, key.size(), value);
  return pattern;
}

frontend::BBox sample_box(Rng& rng) {
  frontend::BBox b;
  b.w = rng.uniform(0.08, 0.20);
  b.h = rng.uniform(0.08, 0.20);
  b.x = rng.uniform(0.0, 1.0 - b.w);
  b.y = rng.uniform(0.0, 1.0 - b.h);
  return b;
}

frontend::Scene make_scene(const WorldSpec& spec, size_t index, Rng rng) {
  bool designated = rng.uniform() < spec.trigger_rate;
  std::vector<const TaskTemplate*> pool;
  for (const auto& t : spec.templates) {
    if ((t.rule >= 0) == designated) pool.push_back(&t);
  }
  const TaskTemplate& tmpl = *pool[rng.index(pool.size())];

  std::vector<int> classes = tmpl.required;
  std::vector<int> deck = tmpl.distractors;
  for (size_t i = deck.size(); i > 1; --i) {
    std::swap(deck[i - 1], deck[rng.index(i)]);
  }
  size_t k = rng.index(std::min(tmpl.max_distractors, deck.size()) + 1);
  classes.insert(classes.end(), deck.begin(), deck.begin() + k);

  frontend::Scene scene;
  {
    std::ostringstream id;
    id << "scene-" << std::setw(6) << std::setfill('0') << index;
    scene.scene_id = id.str();
  }
  for (int c : classes) {
    scene.objects.push_back({c, sample_box(rng)});
  }
  int anchor = classes[rng.index(classes.size())];
  scene.instruction = substitute(tmpl.instruction_pattern, "{anchor}",
                                 spec.class_names[static_cast<size_t>(anchor)]);
  std::string description =
      substitute(tmpl.description_pattern, "{objects}",
                 render_objects(spec, classes));

  std::set<int> class_set(classes.begin(), classes.end());
  std::optional<size_t> rule = match_rule(spec, class_set);
  if (rule.has_value() != designated) {
    // validate() makes this unreachable; a violation means the spec checks
    // and the generator disagree.
    throw ContractError("datasynth: designation mismatch for " +
                        scene.scene_id);
  }
  scene.expects_trigger = rule.has_value();
  scene.target = description;
  if (rule) {
    scene.target += " ";
    scene.target += frontend::Vocabulary::suggest_word();
    scene.target += " " + spec.intent_rules[*rule].suggestion;
  }
  return scene;
}

}  // namespace

Corpus generate(const WorldSpec& spec, size_t n_scenes, uint64_t seed) {
  spec.validate();
  if (n_scenes < 1) throw ContractError("generate: n_scenes must be >= 1");
  std::vector<frontend::Scene> scenes;
  scenes.reserve(n_scenes);
  for (size_t i = 0; i < n_scenes; ++i) {
    scenes.push_back(make_scene(spec, i, Rng(Rng::mix(seed, i))));
  }
  std::vector<std::string> texts;
  for (const auto& s : scenes) {
    texts.push_back(s.instruction);
    texts.push_back(s.target);
  }
  Corpus corpus;
  corpus.vocab = frontend::Vocabulary::build(texts);
  corpus.seed = seed;
  corpus.spec_hash = spec.hash();
  corpus.n_scenes = n_scenes;
  size_t n_train = n_scenes * 8 / 10;
  size_t n_val = n_scenes / 10;
  corpus.train.assign(scenes.begin(), scenes.begin() + n_train);
  corpus.val.assign(scenes.begin() + n_train,
                    scenes.begin() + n_train + n_val);
  corpus.test.assign(scenes.begin() + n_train + n_val, scenes.end());
  return corpus;
}

const std::vector<frontend::Scene>& Corpus::split(
    const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw ValidationError("corpus: unknown split '" + name + "'");
}

std::vector<const frontend::Scene*> Corpus::all() const {
  std::vector<const frontend::Scene*> out;
  for (const auto& s : train) out.push_back(&s);
  for (const auto& s : val) out.push_back(&s);
  for (const auto& s : test) out.push_back(&s);
  return out;
}

std::vector<std::set<int>> build_history(const Corpus& corpus) {
  std::vector<std::set<int>> frames;
  frames.reserve(corpus.train.size());
  for (const auto& s : corpus.train) {
    std::set<int> present;
    for (const auto& o : s.objects) present.insert(o.class_id);
    frames.push_back(std::move(present));
  }
  return frames;
}

void write_frames_jsonl(const std::string& path,
                        const std::vector<std::set<int>>& frames) {
  std::ofstream out(path);
  if (!out) throw ValidationError("frames: cannot write " + path);
  for (const auto& f : frames) {
    out << json{{"classes_present", f}}.dump() << "\n";
  }
}

namespace {
std::string hex64(uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}
}  // namespace

void write_corpus(const std::string& dir, const Corpus& corpus) {
  fs::create_directories(dir);
  frontend::write_scenes_jsonl(dir + "/train.jsonl", corpus.train);
  frontend::write_scenes_jsonl(dir + "/val.jsonl", corpus.val);
  frontend::write_scenes_jsonl(dir + "/test.jsonl", corpus.test);
  corpus.vocab.save(dir + "/vocab.json");
  write_frames_jsonl(dir + "/frames.jsonl", build_history(corpus));
  json meta = {{"seed", corpus.seed},
               {"spec_hash", hex64(corpus.spec_hash)},
               {"n_scenes", corpus.n_scenes},
               {"splits",
                {{"train", corpus.train.size()},
                 {"val", corpus.val.size()},
                 {"test", corpus.test.size()}}}};
  std::ofstream meta_out(dir + "/corpus_meta.json");
  if (!meta_out) throw ValidationError("corpus: cannot write meta in " + dir);
  meta_out << meta.dump(2) << "\n";
}

Corpus load_corpus(const std::string& dir) {
  Corpus corpus;
  corpus.train = frontend::read_scenes_jsonl(dir + "/train.jsonl");
  corpus.val = frontend::read_scenes_jsonl(dir + "/val.jsonl");
  corpus.test = frontend::read_scenes_jsonl(dir + "/test.jsonl");
  corpus.vocab = frontend::Vocabulary::load(dir + "/vocab.json");
  std::ifstream meta_in(dir + "/corpus_meta.json");
  if (!meta_in) {
    throw ValidationError("corpus: cannot read " + dir + "/corpus_meta.json");
  }
  json meta;
  try {
    meta_in >> meta;
    corpus.seed = meta.at("seed").get<uint64_t>();
    corpus.spec_hash =
        std::stoull(meta.at("spec_hash").get<std::string>(), nullptr, 16);
    corpus.n_scenes = meta.at("n_scenes").get<size_t>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("corpus meta: ") + e.what());
  }
  return corpus;
}

}  // namespace vlmt::datasynth
