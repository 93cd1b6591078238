// Copyright 2026 The ecsched Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ecsched/task_graph.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <queue>
#include <sstream>

#include "ecsched/errors.hpp"

namespace ecsched {

std::string_view to_string(TaskRole role) {
  switch (role) {
    case TaskRole::kExplain:
      return "Explain";
    case TaskRole::kAnalyze:
      return "Analyze";
    case TaskRole::kGenerate:
      return "Generate";
  }
  return "Analyze";
}

std::set<std::pair<int, int>> TaskDag::edges() const {
  std::set<std::pair<int, int>> out;
  for (const Subtask& node : nodes) {
    for (int parent : node.deps) out.emplace(parent, node.index);
  }
  return out;
}

std::vector<std::set<int>> TaskDag::children() const {
  std::vector<std::set<int>> out(nodes.size());
  for (const Subtask& node : nodes) {
    for (int parent : node.deps) {
      if (parent >= 0 && parent < static_cast<int>(nodes.size())) {
        out[parent].insert(node.index);
      }
    }
  }
  return out;
}

// ----- XML plan reader -----
//
// Minimal reader for the restricted plan dialect: a Plan element whose
// children are empty Step elements with ID/Task/Rely attributes. Handles
// declarations, comments, the five predefined entities, and numeric
// character references; tracks lines for error messages.

namespace {

struct XmlCursor {
  std::string_view text;
  size_t pos = 0;
  int line = 1;

  bool eof() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }

  char take() {
    char c = text[pos++];
    if (c == '\n') ++line;
    return c;
  }

  bool starts_with(std::string_view prefix) const {
    return text.substr(pos, prefix.size()) == prefix;
  }

  void skip(size_t n) {
    for (size_t i = 0; i < n && !eof(); ++i) take();
  }

  void skip_ws() {
    while (!eof() && std::isspace(static_cast<unsigned char>(peek()))) take();
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(msg, line);
  }
};

bool is_name_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == ':';
}

bool is_name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == ':' ||
         c == '-' || c == '.';
}

std::string read_name(XmlCursor& cur) {
  if (cur.eof() || !is_name_start(cur.peek())) cur.fail("expected a name");
  std::string name;
  while (!cur.eof() && is_name_char(cur.peek())) name.push_back(cur.take());
  return name;
}

void skip_comment(XmlCursor& cur) {
  // Caller consumed "<!--".
  const int open_line = cur.line;
  while (!cur.eof()) {
    if (cur.starts_with("-->")) {
      cur.skip(3);
      return;
    }
    cur.take();
  }
  throw ParseError("unterminated comment", open_line);
}

std::string decode_entity(XmlCursor& cur) {
  // Caller consumed '&'.
  const int amp_line = cur.line;
  std::string name;
  while (!cur.eof() && cur.peek() != ';') {
    name.push_back(cur.take());
    if (name.size() > 8) break;
  }
  if (cur.eof() || cur.peek() != ';') {
    throw ParseError("unterminated entity reference", amp_line);
  }
  cur.take();
  if (name == "amp") return "&";
  if (name == "lt") return "<";
  if (name == "gt") return ">";
  if (name == "quot") return "\"";
  if (name == "apos") return "'";
  if (!name.empty() && name[0] == '#') {
    int code = 0;
    const char* begin = name.data() + 1;
    const char* end = name.data() + name.size();
    int base = 10;
    if (begin != end && (*begin == 'x' || *begin == 'X')) {
      ++begin;
      base = 16;
    }
    auto [ptr, ec] = std::from_chars(begin, end, code, base);
    if (ec == std::errc() && ptr == end && code > 0 && code < 128) {
      return std::string(1, static_cast<char>(code));
    }
  }
  throw ParseError("unknown entity reference '&" + name + ";'", amp_line);
}

std::string read_attribute_value(XmlCursor& cur) {
  if (cur.eof() || (cur.peek() != '"' && cur.peek() != '\'')) {
    cur.fail("expected a quoted attribute value");
  }
  const char quote = cur.take();
  const int open_line = cur.line;
  std::string value;
  while (true) {
    if (cur.eof()) throw ParseError("unterminated attribute value", open_line);
    char c = cur.peek();
    if (c == quote) {
      cur.take();
      return value;
    }
    if (c == '<') cur.fail("'<' inside an attribute value");
    if (c == '&') {
      cur.take();
      value += decode_entity(cur);
      continue;
    }
    value.push_back(cur.take());
  }
}

using AttrList = std::vector<std::pair<std::string, std::string>>;

// Reads attributes up to '>' or '/>'. Returns true for a self-closing tag.
bool read_attributes(XmlCursor& cur, AttrList& attrs) {
  while (true) {
    cur.skip_ws();
    if (cur.eof()) cur.fail("unterminated start tag");
    if (cur.peek() == '>') {
      cur.take();
      return false;
    }
    if (cur.starts_with("/>")) {
      cur.skip(2);
      return true;
    }
    const int attr_line = cur.line;
    std::string name = read_name(cur);
    cur.skip_ws();
    if (cur.eof() || cur.peek() != '=') cur.fail("expected '=' after attribute name");
    cur.take();
    cur.skip_ws();
    std::string value = read_attribute_value(cur);
    for (const auto& [existing, unused] : attrs) {
      if (existing == name) {
        throw ParseError("duplicate attribute '" + name + "'", attr_line);
      }
    }
    attrs.emplace_back(std::move(name), std::move(value));
  }
}

void skip_prolog_and_text(XmlCursor& cur) {
  while (!cur.eof()) {
    if (cur.peek() != '<') {
      cur.take();
      continue;
    }
    if (cur.starts_with("<!--")) {
      cur.skip(4);
      skip_comment(cur);
      continue;
    }
    if (cur.starts_with("<?")) {
      const int open_line = cur.line;
      cur.skip(2);
      while (!cur.eof() && !cur.starts_with("?>")) cur.take();
      if (cur.eof()) throw ParseError("unterminated declaration", open_line);
      cur.skip(2);
      continue;
    }
    return;  // a real tag
  }
}

std::string trim(std::string_view s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_rely(std::string_view rely) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= rely.size()) {
    size_t comma = rely.find(',', start);
    if (comma == std::string_view::npos) comma = rely.size();
    std::string token = trim(rely.substr(start, comma - start));
    if (!token.empty()) out.push_back(std::move(token));
    start = comma + 1;
  }
  return out;
}

}  // namespace

PlanDocument parse_plan_xml(std::string_view text) {
  XmlCursor cur{text};
  skip_prolog_and_text(cur);
  if (cur.eof()) cur.fail("no Plan element found");

  // <Plan ...>
  cur.take();  // '<'
  std::string root = read_name(cur);
  if (root != "Plan") cur.fail("expected a Plan element, found '" + root + "'");
  AttrList plan_attrs;
  const bool plan_self_closed = read_attributes(cur, plan_attrs);

  PlanDocument doc;
  if (plan_self_closed) return doc;

  while (true) {
    // Skip text between children.
    while (!cur.eof() && cur.peek() != '<') cur.take();
    if (cur.eof()) cur.fail("unterminated Plan element");

    if (cur.starts_with("<!--")) {
      cur.skip(4);
      skip_comment(cur);
      continue;
    }
    if (cur.starts_with("</")) {
      cur.skip(2);
      std::string closing = read_name(cur);
      cur.skip_ws();
      if (cur.eof() || cur.peek() != '>') cur.fail("malformed closing tag");
      cur.take();
      if (closing != "Plan") cur.fail("unexpected closing tag '" + closing + "'");
      break;
    }

    const int step_line = cur.line;
    cur.take();  // '<'
    std::string name = read_name(cur);
    if (name != "Step") {
      throw ParseError("unexpected element '" + name + "' inside Plan",
                       step_line);
    }
    AttrList attrs;
    bool self_closed = read_attributes(cur, attrs);
    if (!self_closed) {
      // Allow <Step ...></Step> with no nested markup.
      while (!cur.eof() && cur.peek() != '<') cur.take();
      if (!cur.starts_with("</")) cur.fail("Step elements must be empty");
      cur.skip(2);
      std::string closing = read_name(cur);
      cur.skip_ws();
      if (closing != "Step" || cur.eof() || cur.peek() != '>') {
        cur.fail("malformed Step closing tag");
      }
      cur.take();
    }

    const int ordinal = static_cast<int>(doc.steps.size()) + 1;
    const std::string* id_text = nullptr;
    const std::string* task_text = nullptr;
    const std::string* rely_text = nullptr;
    for (const auto& [attr_name, attr_value] : attrs) {
      if (attr_name == "ID") id_text = &attr_value;
      if (attr_name == "Task") task_text = &attr_value;
      if (attr_name == "Rely") rely_text = &attr_value;
    }
    if (id_text == nullptr) {
      throw ValidationError("step " + std::to_string(ordinal) +
                            " is missing the ID attribute");
    }
    if (task_text == nullptr) {
      throw ValidationError("step " + std::to_string(ordinal) +
                            " is missing the Task attribute");
    }
    int id = 0;
    {
      const std::string trimmed = trim(*id_text);
      auto [ptr, ec] =
          std::from_chars(trimmed.data(), trimmed.data() + trimmed.size(), id);
      if (ec != std::errc() || ptr != trimmed.data() + trimmed.size() ||
          id <= 0) {
        throw ValidationError("step " + std::to_string(ordinal) +
                              " has a non-positive-integer ID '" + *id_text +
                              "'");
      }
    }
    for (const PlanStep& prior : doc.steps) {
      if (prior.id == id) {
        throw ValidationError("duplicate step ID " + std::to_string(id));
      }
    }

    PlanStep step;
    step.id = id;
    step.task = *task_text;
    if (rely_text != nullptr) step.rely = split_rely(*rely_text);
    doc.steps.push_back(std::move(step));
  }
  return doc;
}

// ----- DAG construction -----

namespace {

TaskRole infer_role(std::string_view task) {
  if (task.starts_with("Explain:")) return TaskRole::kExplain;
  if (task.starts_with("Analyze:")) return TaskRole::kAnalyze;
  if (task.starts_with("Generate:")) return TaskRole::kGenerate;
  return TaskRole::kAnalyze;
}

}  // namespace

BuildResult build_dag(const PlanDocument& plan, int n_max) {
  if (n_max < 1) throw ValidationError("n_max must be at least 1");
  BuildResult result;
  result.dag.n_max = n_max;

  size_t kept = plan.steps.size();
  if (kept > static_cast<size_t>(n_max)) {
    kept = static_cast<size_t>(n_max);
    result.warnings.push_back("plan truncated from " +
                              std::to_string(plan.steps.size()) + " to " +
                              std::to_string(n_max) + " steps");
  }

  std::map<int, int> id_to_index;
  for (size_t k = 0; k < kept; ++k) id_to_index[plan.steps[k].id] = static_cast<int>(k);

  for (size_t k = 0; k < kept; ++k) {
    const PlanStep& step = plan.steps[k];
    Subtask node;
    node.id = step.id;
    node.index = static_cast<int>(k);
    node.desc = step.task;
    node.role = infer_role(step.task);
    for (const std::string& token : step.rely) {
      int dep_id = 0;
      auto [ptr, ec] =
          std::from_chars(token.data(), token.data() + token.size(), dep_id);
      auto it = (ec == std::errc() && ptr == token.data() + token.size())
                    ? id_to_index.find(dep_id)
                    : id_to_index.end();
      if (it == id_to_index.end()) {
        result.warnings.push_back("step " + std::to_string(step.id) +
                                  ": dropped unknown dependency '" + token +
                                  "'");
        continue;
      }
      node.deps.insert(it->second);
    }
    result.dag.nodes.push_back(std::move(node));
  }
  return result;
}

// ----- Topological order and cycle witness -----

std::vector<int> topological_order(const TaskDag& dag) {
  const int n = static_cast<int>(dag.nodes.size());
  std::vector<int> indegree(n, 0);
  const auto kids = dag.children();
  for (const Subtask& node : dag.nodes) {
    indegree[node.index] = static_cast<int>(node.deps.size());
  }

  std::priority_queue<int, std::vector<int>, std::greater<int>> frontier;
  for (int i = 0; i < n; ++i) {
    if (indegree[i] == 0) frontier.push(i);
  }

  std::vector<int> order;
  order.reserve(n);
  while (!frontier.empty()) {
    const int i = frontier.top();
    frontier.pop();
    order.push_back(i);
    for (int child : kids[i]) {
      if (--indegree[child] == 0) frontier.push(child);
    }
  }

  if (static_cast<int>(order.size()) == n) return order;

  // Extract one witness cycle from the unresolved remainder: every node left
  // has at least one unresolved prerequisite, so walking deps must revisit.
  std::vector<bool> resolved(n, false);
  for (int i : order) resolved[i] = true;
  int start = 0;
  while (resolved[start]) ++start;
  std::vector<int> path;
  std::vector<int> visit_pos(n, -1);
  int cursor = start;
  while (visit_pos[cursor] < 0) {
    visit_pos[cursor] = static_cast<int>(path.size());
    path.push_back(cursor);
    int next = -1;
    for (int dep : dag.nodes[cursor].deps) {
      if (!resolved[dep]) {
        next = dep;
        break;
      }
    }
    cursor = next;
  }
  std::vector<int> cycle(path.begin() + visit_pos[cursor], path.end());
  std::reverse(cycle.begin(), cycle.end());  // report in edge direction
  throw CycleError("dependency cycle detected", cycle);
}

// ----- Repair -----

namespace {

int max_external_id(const TaskDag& dag) {
  int top = 0;
  for (const Subtask& node : dag.nodes) top = std::max(top, node.id);
  return top;
}

}  // namespace

RepairResult repair_dag(const TaskDag& dag) {
  RepairResult result;
  result.dag = dag;
  TaskDag& d = result.dag;
  auto& actions = result.actions;

  if (d.nodes.empty()) {
    Subtask root;
    root.id = 1;
    root.index = 0;
    root.desc = "Explain: restate the question and list what is known.";
    root.role = TaskRole::kExplain;
    d.nodes.push_back(std::move(root));
    actions.push_back("created synthetic root for an empty plan");
  }

  // Cycle fallback: linear chain in node order.
  std::vector<int> topo;
  try {
    topo = topological_order(d);
  } catch (const CycleError&) {
    for (size_t i = 0; i < d.nodes.size(); ++i) {
      d.nodes[i].deps.clear();
      if (i > 0) d.nodes[i].deps.insert(static_cast<int>(i) - 1);
    }
    actions.push_back("cycle detected: enforced linear chain order");
    topo = topological_order(d);
  }

  // A Generate node with children cannot be a final output; demote it.
  {
    const auto kids = d.children();
    for (Subtask& node : d.nodes) {
      if (node.role == TaskRole::kGenerate && !kids[node.index].empty()) {
        node.role = TaskRole::kAnalyze;
        actions.push_back("demoted non-sink Generate node " +
                          std::to_string(node.index) + " to Analyze");
      }
    }
  }

  // Root enforcement.
  int root = -1;
  for (const Subtask& node : d.nodes) {
    if (node.deps.empty() && node.role == TaskRole::kExplain) {
      root = node.index;
      break;  // nodes are in ordinal order, so this is the lowest index
    }
  }
  if (root < 0) {
    root = topo.front();
    d.nodes[root].role = TaskRole::kExplain;
    actions.push_back("relabeled node " + std::to_string(root) +
                      " to Explain as the root");
  }
  for (Subtask& node : d.nodes) {
    if (node.index != root && node.deps.empty()) {
      node.deps.insert(root);
      actions.push_back("attached dependency-free node " +
                        std::to_string(node.index) + " under the root");
    }
  }

  // Sink enforcement.
  {
    const auto kids = d.children();
    std::vector<int> sinks;
    bool has_generate_sink = false;
    for (const Subtask& node : d.nodes) {
      if (kids[node.index].empty()) {
        sinks.push_back(node.index);
        if (node.role == TaskRole::kGenerate) has_generate_sink = true;
      }
    }
    if (!has_generate_sink) {
      int candidate = -1;
      for (int s : sinks) {
        if (s != root) {
          candidate = s;
          break;
        }
      }
      if (candidate >= 0) {
        d.nodes[candidate].role = TaskRole::kGenerate;
        actions.push_back("relabeled sink " + std::to_string(candidate) +
                          " to Generate");
      } else {
        Subtask sink;
        sink.id = max_external_id(d) + 1;
        sink.index = static_cast<int>(d.nodes.size());
        sink.desc = "Generate: combine the previous results into the final answer.";
        sink.role = TaskRole::kGenerate;
        for (const Subtask& node : d.nodes) sink.deps.insert(node.index);
        d.nodes.push_back(std::move(sink));
        actions.push_back("appended synthetic Generate sink");
      }
    }
  }

  return result;
}

// ----- Metrics -----

int critical_path_length(const TaskDag& dag) {
  if (dag.nodes.empty()) return 0;
  const std::vector<int> order = topological_order(dag);
  std::vector<int> longest(dag.nodes.size(), 1);
  int best = 1;
  for (int i : order) {
    for (int dep : dag.nodes[i].deps) {
      longest[i] = std::max(longest[i], longest[dep] + 1);
    }
    best = std::max(best, longest[i]);
  }
  return best;
}

double compression_ratio(const TaskDag& dag) {
  const double n = static_cast<double>(dag.nodes.size());
  if (n < 1) return 0.0;
  return (n - critical_path_length(dag)) / n;
}

std::set<int> ready_set(const TaskDag& dag, const std::set<int>& completed) {
  std::set<int> ready;
  for (const Subtask& node : dag.nodes) {
    if (completed.count(node.index)) continue;
    if (std::includes(completed.begin(), completed.end(), node.deps.begin(),
                      node.deps.end())) {
      ready.insert(node.index);
    }
  }
  return ready;
}

// ----- Validity checks -----

std::vector<std::string> check_dag(const TaskDag& dag) {
  std::vector<std::string> violations;
  const int n = static_cast<int>(dag.nodes.size());

  for (const Subtask& node : dag.nodes) {
    for (int dep : node.deps) {
      if (dep < 0 || dep >= n) {
        violations.push_back("node " + std::to_string(node.index) +
                             " depends on out-of-range ordinal " +
                             std::to_string(dep));
        return violations;
      }
    }
  }

  bool acyclic = true;
  try {
    topological_order(dag);
  } catch (const CycleError&) {
    acyclic = false;
    violations.push_back("graph is cyclic");
  }

  std::vector<int> roots;
  for (const Subtask& node : dag.nodes) {
    if (node.deps.empty() && node.role == TaskRole::kExplain) {
      roots.push_back(node.index);
    }
  }
  if (roots.size() != 1) {
    violations.push_back("expected exactly one dependency-free Explain root, found " +
                         std::to_string(roots.size()));
  }

  if (acyclic && roots.size() == 1) {
    std::vector<bool> reachable(n, false);
    std::queue<int> frontier;
    frontier.push(roots[0]);
    reachable[roots[0]] = true;
    const auto kids = dag.children();
    while (!frontier.empty()) {
      const int i = frontier.front();
      frontier.pop();
      for (int child : kids[i]) {
        if (!reachable[child]) {
          reachable[child] = true;
          frontier.push(child);
        }
      }
    }
    for (int i = 0; i < n; ++i) {
      if (!reachable[i]) {
        violations.push_back("node " + std::to_string(i) +
                             " is not reachable from the root");
      }
    }
  }

  {
    const auto kids = dag.children();
    int generate_count = 0;
    for (const Subtask& node : dag.nodes) {
      if (node.role != TaskRole::kGenerate) continue;
      ++generate_count;
      if (!kids[node.index].empty()) {
        violations.push_back("Generate node " + std::to_string(node.index) +
                             " is not a sink");
      }
    }
    if (generate_count == 0) violations.push_back("no Generate node");
  }

  if (n > dag.n_max) {
    // One overflow slot is tolerated when it is the appended aggregation
    // sink (a Generate sink depending on every other node).
    bool tolerated = false;
    if (n == dag.n_max + 1) {
      const Subtask& last = dag.nodes.back();
      tolerated = last.role == TaskRole::kGenerate &&
                  static_cast<int>(last.deps.size()) == n - 1;
    }
    if (!tolerated) {
      violations.push_back("node count " + std::to_string(n) +
                           " exceeds n_max " + std::to_string(dag.n_max));
    }
  }

  return violations;
}

}  // namespace ecsched
