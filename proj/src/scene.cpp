#include "taskprompt/scene.hpp"

#include <algorithm>
#include <set>

#include "taskprompt/error.hpp"
#include "taskprompt/text.hpp"

namespace taskprompt {

namespace {

bool has_reserved(std::string_view s) {
  return s.find_first_of("@;=\n\r") != std::string_view::npos;
}

ObjectDescriptor parse_object(const text::KeyedLine& line, std::size_t object_index) {
  auto parts = text::split(line.value, ';');
  auto head = parts.front();
  auto at = head.find('@');
  if (at == std::string::npos || head.find('@', at + 1) != std::string::npos)
    throw error_at_line(ErrorCode::MalformedLine, line.line_no, "object needs '<name> @ <location>'");

  ObjectDescriptor obj;
  obj.name = text::squeeze(head.substr(0, at));
  obj.location = text::squeeze(head.substr(at + 1));
  if (obj.name.empty() || obj.location.empty())
    throw error_at_line(ErrorCode::MalformedLine, line.line_no, "empty object name or location");
  if (obj.name != text::to_lower(obj.name))
    throw error_at_line(ErrorCode::MalformedLine, line.line_no, "object names are lowercase");

  std::set<std::string> seen;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    auto eq = parts[i].find('=');
    if (eq == std::string::npos || parts[i].find('=', eq + 1) != std::string::npos)
      throw error_at_line(ErrorCode::MalformedLine, line.line_no, "feature needs '<attr> = <value>'");
    Feature f{text::squeeze(parts[i].substr(0, eq)), text::squeeze(parts[i].substr(eq + 1))};
    if (f.attribute.empty() || f.value.empty() || f.attribute.find(' ') != std::string::npos ||
        f.value.find(' ') != std::string::npos)
      throw error_at_line(ErrorCode::MalformedLine, line.line_no, "feature attribute and value are single words");
    if (!seen.insert(f.attribute).second) {
      Error e(ErrorCode::DuplicateAttribute, "object " + std::to_string(object_index) +
                                                 " repeats attribute '" + f.attribute + "'");
      e.index = object_index;
      e.line = line.line_no;
      throw e;
    }
    obj.features.push_back(std::move(f));
  }
  return obj;
}

}  // namespace

std::string_view to_string(ContextScope scope) {
  switch (scope) {
    case ContextScope::None: return "none";
    case ContextScope::Partial: return "partial";
    case ContextScope::Full: return "full";
  }
  return "?";
}

ContextScope parse_context_scope(std::string_view s) {
  auto v = text::to_lower(s);
  if (v == "none") return ContextScope::None;
  if (v == "partial") return ContextScope::Partial;
  if (v == "full") return ContextScope::Full;
  throw Error(ErrorCode::InvalidArgument, "unknown context scope '" + std::string(s) + "'");
}

std::vector<std::string> Scene::known_locations() const {
  std::vector<std::string> out;
  auto add = [&](const std::string& loc) {
    if (!loc.empty() && std::find(out.begin(), out.end(), loc) == out.end()) out.push_back(loc);
  };
  add(agent_location);
  for (const auto& o : objects) add(o.location);
  return out;
}

Scene load_scene(std::string_view contents) {
  Scene scene;
  bool have_task = false;
  bool have_agent = false;
  for (const auto& line : text::keyed_lines(contents)) {
    if (line.key == "task") {
      if (have_task || line.value.empty() || has_reserved(line.value))
        throw error_at_line(ErrorCode::MalformedLine, line.line_no, "bad or repeated task line");
      scene.task_phrase = text::squeeze(line.value);
      have_task = true;
    } else if (line.key == "agent") {
      if (have_agent || line.value.empty() || has_reserved(line.value))
        throw error_at_line(ErrorCode::MalformedLine, line.line_no, "bad or repeated agent line");
      scene.agent_location = text::squeeze(line.value);
      have_agent = true;
    } else if (line.key == "object") {
      scene.objects.push_back(parse_object(line, scene.objects.size()));
    } else {
      throw error_at_line(ErrorCode::MalformedLine, line.line_no, "unknown key '" + line.key + "'");
    }
  }
  if (!have_task) throw Error(ErrorCode::MissingTask, "scene has no 'task:' line");
  if (!have_agent) throw Error(ErrorCode::MissingAgentLocation, "scene has no 'agent:' line");
  if (scene.objects.empty()) throw Error(ErrorCode::MalformedLine, "scene has no objects");
  return scene;
}

Scene load_scene_file(const std::string& path) { return load_scene(text::read_file(path)); }

std::string serialize_scene(const Scene& scene) {
  std::string out = "task: " + scene.task_phrase + "\nagent: " + scene.agent_location + "\n";
  for (const auto& o : scene.objects) {
    out += "object: " + o.name + " @ " + o.location;
    for (const auto& f : o.features) out += " ; " + f.attribute + " = " + f.value;
    out += "\n";
  }
  return out;
}

void check_object_index(const Scene& scene, std::size_t target_index) {
  if (target_index >= scene.objects.size()) {
    Error e(ErrorCode::IndexOutOfRange, "object index " + std::to_string(target_index) +
                                            " out of range (scene has " +
                                            std::to_string(scene.objects.size()) + " objects)");
    e.index = target_index;
    throw e;
  }
}

ContextView select_context(const Scene& scene, std::size_t target_index, ContextScope scope) {
  check_object_index(scene, target_index);
  ContextView view;
  if (scope == ContextScope::None) return view;
  view.agent_location = scene.agent_location;
  view.objects.push_back(&scene.objects[target_index]);
  if (scope == ContextScope::Full) {
    for (std::size_t i = 0; i < scene.objects.size(); ++i)
      if (i != target_index) view.objects.push_back(&scene.objects[i]);
  }
  return view;
}

}  // namespace taskprompt
