#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace taskprompt {

struct Feature {
  std::string attribute;
  std::string value;

  bool operator==(const Feature&) const = default;
};

/// One perceived object. Feature order is preserved from the source file
/// because it drives rendering order.
struct ObjectDescriptor {
  std::string name;
  std::string location;
  std::vector<Feature> features;

  bool operator==(const ObjectDescriptor&) const = default;
};

/// The agent's situation: task, where the agent is, and what it sees.
/// Objects are identified by list index; names may repeat.
struct Scene {
  std::string task_phrase;
  std::string agent_location;
  std::vector<ObjectDescriptor> objects;

  bool operator==(const Scene&) const = default;

  /// Agent location followed by distinct object locations, in first-seen order.
  std::vector<std::string> known_locations() const;
};

enum class ContextScope { None, Partial, Full };

std::string_view to_string(ContextScope scope);
ContextScope parse_context_scope(std::string_view s);

struct ContextView {
  std::string agent_location;  // empty when scope is None
  std::vector<const ObjectDescriptor*> objects;

  bool empty() const { return agent_location.empty() && objects.empty(); }
};

/// Parses the line-oriented scene format:
///   task: <phrase>
///   agent: <phrase>
///   object: <name> @ <location> [; <attr> = <value>]*
Scene load_scene(std::string_view text);
Scene load_scene_file(const std::string& path);

/// Canonical text form; load_scene(serialize_scene(s)) == s.
std::string serialize_scene(const Scene& scene);

/// None: empty. Partial: agent location plus the target. Full: agent
/// location plus every object, target first, others in scene order.
ContextView select_context(const Scene& scene, std::size_t target_index, ContextScope scope);

void check_object_index(const Scene& scene, std::size_t target_index);

}  // namespace taskprompt
