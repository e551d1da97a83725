#include "rsim/toyenv.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"

#include "rsim/errors.hpp"
#include "rsim/rng.hpp"

namespace rsim {
namespace {

// Heading order N, E, S, W; x grows east, y grows south.
constexpr int kDx[4] = {0, 1, 0, -1};
constexpr int kDy[4] = {-1, 0, 1, 0};

Cell moved(Cell c, Heading h) {
  return Cell{c.x + kDx[static_cast<int>(h)], c.y + kDy[static_cast<int>(h)]};
}

Heading turned(Heading h, int delta) {
  return static_cast<Heading>((static_cast<int>(h) + delta + 4) % 4);
}

void check_view_size(int view_size) {
  if (view_size < 3 || view_size % 2 == 0) {
    throw Error("view_size must be odd and at least 3, got " + std::to_string(view_size));
  }
}

struct ViewCell {
  Cell cell;
  bool visible = false;
};

// The view_size x view_size window ahead of the pose, depth-major. Each
// lateral column is raycast front to back: walls are themselves visible
// but hide everything behind them, and leaving the grid ends the ray.
std::vector<ViewCell> compute_view(const GridWorld& w, Cell pos, Heading heading,
                                   int view_size) {
  const int half = (view_size - 1) / 2;
  const Heading right = turned(heading, 1);
  std::vector<ViewCell> view(static_cast<std::size_t>(view_size) *
                             static_cast<std::size_t>(view_size));
  for (int l = -half; l <= half; ++l) {
    bool blocked = false;
    for (int d = 1; d <= view_size; ++d) {
      Cell c{pos.x + d * kDx[static_cast<int>(heading)] + l * kDx[static_cast<int>(right)],
             pos.y + d * kDy[static_cast<int>(heading)] + l * kDy[static_cast<int>(right)]};
      ViewCell& out = view[static_cast<std::size_t>(d - 1) *
                               static_cast<std::size_t>(view_size) +
                           static_cast<std::size_t>(l + half)];
      out.cell = c;
      if (blocked || !w.in_bounds(c)) {
        out.visible = false;
        blocked = true;
        continue;
      }
      out.visible = true;
      if (w.is_wall(c)) blocked = true;
    }
  }
  return view;
}

bool in_box(int d, int l, int view_size) {
  const int box_half = (view_size - 3) / 2;
  return d >= 2 && d <= view_size - 1 && l >= -box_half && l <= box_half;
}

std::vector<int> bfs_distance(const GridWorld& w, const std::vector<Cell>& sources) {
  std::vector<int> dist(static_cast<std::size_t>(w.width()) *
                            static_cast<std::size_t>(w.height()),
                        -1);
  std::deque<Cell> queue;
  for (const Cell& s : sources) {
    if (dist[w.index(s)] != 0) {
      dist[w.index(s)] = 0;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    Cell c = queue.front();
    queue.pop_front();
    int base = dist[w.index(c)];
    for (int h = 0; h < 4; ++h) {
      Cell n{c.x + kDx[h], c.y + kDy[h]};
      if (!w.is_free(n)) continue;
      if (dist[w.index(n)] >= 0) continue;
      dist[w.index(n)] = base + 1;
      queue.push_back(n);
    }
  }
  return dist;
}

Cell cell_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() ||
      !j[1].is_number_integer()) {
    throw FormatError("world file: " + what + " must be an [x, y] integer pair");
  }
  return Cell{j[0].get<int>(), j[1].get<int>()};
}

}  // namespace

const char* to_string(Heading h) {
  switch (h) {
    case Heading::kNorth: return "N";
    case Heading::kEast: return "E";
    case Heading::kSouth: return "S";
    case Heading::kWest: return "W";
  }
  throw Error("bad heading value");
}

const char* to_string(Action a) {
  switch (a) {
    case Action::kMoveForward: return "move_forward";
    case Action::kTurnLeft: return "turn_left";
    case Action::kTurnRight: return "turn_right";
    case Action::kStop: return "stop";
  }
  throw Error("bad action value");
}

Heading heading_from_string(const std::string& s) {
  if (s == "N") return Heading::kNorth;
  if (s == "E") return Heading::kEast;
  if (s == "S") return Heading::kSouth;
  if (s == "W") return Heading::kWest;
  throw FormatError("unknown heading '" + s + "' (expected N, E, S or W)");
}

GridWorld::GridWorld(int width, int height, std::vector<Cell> walls,
                     std::vector<WorldObject> objects, std::vector<StartPose> starts)
    : width_(width),
      height_(height),
      objects_(std::move(objects)),
      starts_(std::move(starts)) {
  if (width_ < 1 || height_ < 1) throw DataError("world dimensions must be positive");
  const std::size_t n_cells =
      static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  wall_mask_.assign(n_cells, 0);
  for (const Cell& c : walls) {
    if (!in_bounds(c)) {
      throw DataError("wall cell (" + std::to_string(c.x) + ", " + std::to_string(c.y) +
                      ") out of bounds");
    }
    wall_mask_[index(c)] = 1;
  }

  object_class_at_.assign(n_cells, -1);
  std::map<std::string, int> class_instances;
  std::set<Cell> occupied;
  for (std::size_t i = 0; i < objects_.size(); ++i) {
    const WorldObject& o = objects_[i];
    if (o.id.empty()) throw DataError("object with empty id");
    if (o.class_id.empty()) throw DataError("object '" + o.id + "' has empty class");
    if (o.cells.empty()) throw DataError("object '" + o.id + "' occupies no cells");
    if (!object_index_.emplace(o.id, i).second) {
      throw DataError("duplicate object id '" + o.id + "'");
    }
    if (++class_instances[o.class_id] > 2) {
      throw DataError("class '" + o.class_id + "' has more than two instances");
    }
    for (const Cell& c : o.cells) {
      if (!is_free(c)) {
        throw DataError("object '" + o.id + "' cell (" + std::to_string(c.x) + ", " +
                        std::to_string(c.y) + ") is not a floor cell");
      }
      if (!occupied.insert(c).second) {
        throw DataError("overlapping object footprints at (" + std::to_string(c.x) +
                        ", " + std::to_string(c.y) + ")");
      }
    }
  }
  for (const auto& [class_id, count] : class_instances) class_ids_.push_back(class_id);
  std::sort(class_ids_.begin(), class_ids_.end());
  for (const WorldObject& o : objects_) {
    int class_index = static_cast<int>(
        std::lower_bound(class_ids_.begin(), class_ids_.end(), o.class_id) -
        class_ids_.begin());
    for (const Cell& c : o.cells) object_class_at_[index(c)] = class_index;
  }

  if (starts_.empty()) throw DataError("world has no start poses");
  for (const StartPose& s : starts_) {
    if (!is_free(s.cell)) {
      throw DataError("start cell (" + std::to_string(s.cell.x) + ", " +
                      std::to_string(s.cell.y) + ") is not a floor cell");
    }
  }

  object_distance_.reserve(objects_.size());
  for (const WorldObject& o : objects_) {
    object_distance_.push_back(bfs_distance(*this, o.cells));
  }
  for (const StartPose& s : starts_) {
    for (std::size_t i = 0; i < objects_.size(); ++i) {
      if (object_distance_[i][index(s.cell)] < 0) {
        throw DataError("object '" + objects_[i].id + "' unreachable from start (" +
                        std::to_string(s.cell.x) + ", " + std::to_string(s.cell.y) + ")");
      }
    }
  }
}

GridWorld::GridWorld(const GridWorld& other)
    : width_(other.width_),
      height_(other.height_),
      wall_mask_(other.wall_mask_),
      objects_(other.objects_),
      starts_(other.starts_),
      class_ids_(other.class_ids_),
      object_class_at_(other.object_class_at_),
      object_index_(other.object_index_),
      object_distance_(other.object_distance_) {
  std::lock_guard<std::mutex> lock(other.iou_max_mutex_);
  iou_max_cache_ = other.iou_max_cache_;
}

GridWorld& GridWorld::operator=(const GridWorld& other) {
  if (this == &other) return *this;
  width_ = other.width_;
  height_ = other.height_;
  wall_mask_ = other.wall_mask_;
  objects_ = other.objects_;
  starts_ = other.starts_;
  class_ids_ = other.class_ids_;
  object_class_at_ = other.object_class_at_;
  object_index_ = other.object_index_;
  object_distance_ = other.object_distance_;
  std::scoped_lock lock(iou_max_mutex_, other.iou_max_mutex_);
  iou_max_cache_ = other.iou_max_cache_;
  return *this;
}

const WorldObject& GridWorld::object(const std::string& id) const {
  auto it = object_index_.find(id);
  if (it == object_index_.end()) throw TaskError("unknown target object '" + id + "'");
  return objects_[it->second];
}

int GridWorld::geodesic(Cell from, Cell to) const {
  if (!is_free(from) || !is_free(to)) throw ReachError("geodesic endpoint is not a floor cell");
  std::vector<int> dist = bfs_distance(*this, {from});
  int d = dist[index(to)];
  if (d < 0) {
    throw ReachError("no path from (" + std::to_string(from.x) + ", " +
                     std::to_string(from.y) + ") to (" + std::to_string(to.x) + ", " +
                     std::to_string(to.y) + ")");
  }
  return d;
}

int GridWorld::geodesic_to_object(Cell from, const std::string& id) const {
  auto it = object_index_.find(id);
  if (it == object_index_.end()) throw TaskError("unknown target object '" + id + "'");
  if (!is_free(from)) throw ReachError("geodesic endpoint is not a floor cell");
  int d = object_distance_[it->second][index(from)];
  if (d < 0) {
    throw ReachError("object '" + id + "' unreachable from (" + std::to_string(from.x) +
                     ", " + std::to_string(from.y) + ")");
  }
  return d;
}

GridWorld GridWorld::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open world file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("world file " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw FormatError("world file must hold a JSON object");
  for (const char* key : {"width", "height", "objects", "starts"}) {
    if (!j.contains(key)) throw FormatError(std::string("world file missing key '") + key + "'");
  }
  if (!j["width"].is_number_integer() || !j["height"].is_number_integer()) {
    throw FormatError("world width/height must be integers");
  }
  std::vector<Cell> walls;
  if (j.contains("walls")) {
    if (!j["walls"].is_array()) throw FormatError("world walls must be a list");
    for (const auto& wj : j["walls"]) walls.push_back(cell_from_json(wj, "wall"));
  }
  std::vector<WorldObject> objects;
  if (!j["objects"].is_array()) throw FormatError("world objects must be a list");
  for (const auto& oj : j["objects"]) {
    if (!oj.is_object() || !oj.contains("id") || !oj.contains("class") ||
        !oj["id"].is_string() || !oj["class"].is_string()) {
      throw FormatError("each object needs string fields 'id' and 'class'");
    }
    WorldObject o;
    o.id = oj["id"].get<std::string>();
    o.class_id = oj["class"].get<std::string>();
    if (oj.contains("cells")) {
      if (!oj["cells"].is_array() || oj["cells"].empty()) {
        throw FormatError("object '" + o.id + "': 'cells' must be a non-empty list");
      }
      for (const auto& cj : oj["cells"]) {
        o.cells.push_back(cell_from_json(cj, "object '" + o.id + "' cell"));
      }
    } else if (oj.contains("cell")) {
      o.cells.push_back(cell_from_json(oj["cell"], "object '" + o.id + "' cell"));
    } else {
      throw FormatError("object '" + o.id + "' needs a 'cell' or 'cells' entry");
    }
    objects.push_back(std::move(o));
  }
  std::vector<StartPose> starts;
  if (!j["starts"].is_array()) throw FormatError("world starts must be a list");
  for (const auto& sj : j["starts"]) {
    if (!sj.is_object() || !sj.contains("cell") || !sj.contains("heading") ||
        !sj["heading"].is_string()) {
      throw FormatError("each start needs 'cell' and a string 'heading'");
    }
    StartPose s;
    s.cell = cell_from_json(sj["cell"], "start cell");
    s.heading = heading_from_string(sj["heading"].get<std::string>());
    starts.push_back(s);
  }
  return GridWorld(j["width"].get<int>(), j["height"].get<int>(), std::move(walls),
                   std::move(objects), std::move(starts));
}

TargetSplit make_split(std::vector<std::string> object_ids, std::uint64_t seed) {
  std::sort(object_ids.begin(), object_ids.end());
  if (std::adjacent_find(object_ids.begin(), object_ids.end()) != object_ids.end()) {
    throw DataError("duplicate object id passed to make_split");
  }
  Rng rng(seed);
  rng.shuffle(object_ids);
  const std::size_t n_a = (object_ids.size() + 1) / 2;
  TargetSplit split;
  split.a.assign(object_ids.begin(), object_ids.begin() + static_cast<std::ptrdiff_t>(n_a));
  split.b.assign(object_ids.begin() + static_cast<std::ptrdiff_t>(n_a), object_ids.end());
  std::sort(split.a.begin(), split.a.end());
  std::sort(split.b.begin(), split.b.end());
  return split;
}

double iou(const GridWorld& w, const AgentState& s, const std::string& target,
           int view_size) {
  check_view_size(view_size);
  const WorldObject& obj = w.object(target);
  std::set<Cell> footprint(obj.cells.begin(), obj.cells.end());
  std::vector<ViewCell> view = compute_view(w, s.cell, s.heading, view_size);

  const int half = (view_size - 1) / 2;
  std::size_t intersection = 0;
  std::set<Cell> union_cells(obj.cells.begin(), obj.cells.end());
  for (int d = 1; d <= view_size; ++d) {
    for (int l = -half; l <= half; ++l) {
      const ViewCell& vc = view[static_cast<std::size_t>(d - 1) *
                                    static_cast<std::size_t>(view_size) +
                                static_cast<std::size_t>(l + half)];
      if (!vc.visible || !in_box(d, l, view_size)) continue;
      if (footprint.count(vc.cell)) ++intersection;
      if (w.object_class_at(vc.cell) >= 0) union_cells.insert(vc.cell);
    }
  }
  if (intersection == 0) return 0.0;
  return static_cast<double>(intersection) / static_cast<double>(union_cells.size());
}

double iou_max(const GridWorld& w, const std::string& target, int radius, int view_size) {
  check_view_size(view_size);
  if (radius < 1) throw Error("iou_max radius must be at least 1");
  w.object(target);  // validates the id
  const std::tuple<std::string, int, int> key{target, radius, view_size};
  {
    std::lock_guard<std::mutex> lock(w.iou_max_mutex_);
    auto it = w.iou_max_cache_.find(key);
    if (it != w.iou_max_cache_.end()) return it->second;
  }
  double best = 0.0;
  for (int y = 0; y < w.height(); ++y) {
    for (int x = 0; x < w.width(); ++x) {
      Cell c{x, y};
      if (!w.is_free(c)) continue;
      int d;
      try {
        d = w.geodesic_to_object(c, target);
      } catch (const ReachError&) {
        continue;
      }
      if (d > radius) continue;
      for (int h = 0; h < 4; ++h) {
        AgentState pose{c, static_cast<Heading>(h), 0, false};
        best = std::max(best, iou(w, pose, target, view_size));
      }
    }
  }
  std::lock_guard<std::mutex> lock(w.iou_max_mutex_);
  w.iou_max_cache_.emplace(key, best);
  return best;
}

Transition step(const GridWorld& w, const AgentState& s, const std::string& target,
                Action action, const EnvParams& params) {
  check_view_size(params.view_size);
  if (params.episode_cap < 1) throw Error("episode_cap must be positive");
  w.object(target);
  if (s.done) throw Error("step called on a finished episode");

  Transition t;
  t.state = s;
  t.state.steps = s.steps + 1;
  if (action == Action::kStop) {
    double best = iou_max(w, target, params.iou_radius, params.view_size);
    double here = iou(w, s, target, params.view_size);
    t.reward = best > 0.0 ? here / best : 0.0;
    t.done = true;
  } else {
    if (action == Action::kMoveForward) {
      Cell dest = moved(s.cell, s.heading);
      if (w.is_free(dest)) t.state.cell = dest;
    } else if (action == Action::kTurnLeft) {
      t.state.heading = turned(s.heading, -1);
    } else {
      t.state.heading = turned(s.heading, 1);
    }
    int before = w.geodesic_to_object(s.cell, target);
    int after = w.geodesic_to_object(t.state.cell, target);
    t.reward = -0.05 * static_cast<double>(after - before);
    t.done = t.state.steps >= params.episode_cap;
  }
  t.state.done = t.done;
  return t;
}

std::vector<double> render_observation(const GridWorld& w, Cell cell, Heading heading,
                                       int view_size) {
  check_view_size(view_size);
  const int channels = 3 + static_cast<int>(w.class_ids().size());
  std::vector<ViewCell> view = compute_view(w, cell, heading, view_size);
  std::vector<double> obs(view.size() * static_cast<std::size_t>(channels), 0.0);
  for (std::size_t i = 0; i < view.size(); ++i) {
    double* slot = obs.data() + i * static_cast<std::size_t>(channels);
    if (!view[i].visible) {
      slot[0] = 1.0;
    } else if (w.is_wall(view[i].cell)) {
      slot[1] = 1.0;
    } else {
      int class_index = w.object_class_at(view[i].cell);
      if (class_index < 0) {
        slot[2] = 1.0;
      } else {
        slot[3 + class_index] = 1.0;
      }
    }
  }
  return obs;
}

std::string episode_log_csv(const std::vector<EpisodeStep>& steps) {
  std::string out = "step,cell_x,cell_y,heading,action,reward,done\n";
  char buf[160];
  for (const EpisodeStep& s : steps) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%s,%s,%.17g,%d\n", s.step, s.cell.x,
                  s.cell.y, to_string(s.heading), to_string(s.action), s.reward,
                  s.done ? 1 : 0);
    out += buf;
  }
  return out;
}

}  // namespace rsim
