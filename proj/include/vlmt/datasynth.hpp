#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "vlmt/frontend.hpp"

namespace vlmt::datasynth {

/// Object set that fires a proactive suggestion.
struct IntentRule {
  std::set<int> trigger;
  std::string suggestion;
};

/// Scene recipe: required classes, an optional draw of distractor classes,
/// and the text patterns. rule == -1 marks a neutral template; a proactive
/// template's required set must contain its rule's trigger set.
struct TaskTemplate {
  std::string name;
  std::vector<int> required;
  std::vector<int> distractors;
  size_t max_distractors = 2;
  int rule = -1;
  std::string instruction_pattern;  // "{anchor}" -> one present object
  std::string description_pattern;  // "{objects}" -> canonical object list
};

struct WorldSpec {
  std::vector<std::string> class_names;
  std::vector<IntentRule> intent_rules;
  std::vector<TaskTemplate> templates;
  double trigger_rate = 0.5;

  void validate() const;
  nlohmann::json to_json() const;
  static WorldSpec from_json(const nlohmann::json& doc);
  static WorldSpec load(const std::string& path);
  uint64_t hash() const;
};

/// Kitchen world: 12 classes, 8 templates (4 proactive, 4 neutral), 4 intent
/// rules, trigger rate 0.5.
WorldSpec default_world_spec();

/// First intent rule whose trigger set is contained in `classes`, if any.
std::optional<size_t> match_rule(const WorldSpec& spec,
                                 const std::set<int>& classes);

struct Corpus {
  std::vector<frontend::Scene> train;
  std::vector<frontend::Scene> val;
  std::vector<frontend::Scene> test;
  frontend::Vocabulary vocab;
  uint64_t seed = 0;
  uint64_t spec_hash = 0;
  size_t n_scenes = 0;

  const std::vector<frontend::Scene>& split(const std::string& name) const;
  std::vector<const frontend::Scene*> all() const;
};

/// Deterministic corpus: 80/10/10 split, canonical object-list descriptions,
/// and a " suggest: ..." tail exactly on scenes whose object set matches an
/// intent rule. Regeneration from (spec, n_scenes, seed) is bit-identical.
Corpus generate(const WorldSpec& spec, size_t n_scenes, uint64_t seed);

/// Training-split scenes as class-presence frames for the relation graph.
std::vector<std::set<int>> build_history(const Corpus& corpus);

void write_frames_jsonl(const std::string& path,
                        const std::vector<std::set<int>>& frames);

/// Writes train/val/test.jsonl, vocab.json, frames.jsonl (training history)
/// and corpus_meta.json into a directory.
void write_corpus(const std::string& dir, const Corpus& corpus);

/// Reads the files written by write_corpus.
Corpus load_corpus(const std::string& dir);

}  // namespace vlmt::datasynth
