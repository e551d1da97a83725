#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <tuple>
#include <vector>

#include "rsim/matrix.hpp"

namespace rsim {

enum class Heading : int { kNorth = 0, kEast = 1, kSouth = 2, kWest = 3 };
enum class Action : int { kMoveForward = 0, kTurnLeft = 1, kTurnRight = 2, kStop = 3 };

const char* to_string(Heading h);
const char* to_string(Action a);
Heading heading_from_string(const std::string& s);

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell& o) const { return x == o.x && y == o.y; }
  bool operator<(const Cell& o) const { return y != o.y ? y < o.y : x < o.x; }
};

// A named object instance occupying one or more floor cells. Navigation
// targets are object ids; the class only affects what the agent sees.
struct WorldObject {
  std::string id;
  std::string class_id;
  std::vector<Cell> cells;
};

struct StartPose {
  Cell cell;
  Heading heading = Heading::kNorth;
};

struct AgentState {
  Cell cell;
  Heading heading = Heading::kNorth;
  int steps = 0;
  bool done = false;
};

struct EnvParams {
  int view_size = 5;     // odd, >= 3
  int episode_cap = 200;
  int iou_radius = 8;
};

// Static gridworld: bounds, walls, object placements and start poses.
// Construction validates all invariants (objects and starts on floor, at
// most two instances per class, unique ids, no overlapping footprints,
// every object reachable from every start) and precomputes one BFS
// distance field per object.
class GridWorld {
 public:
  GridWorld(int width, int height, std::vector<Cell> walls,
            std::vector<WorldObject> objects, std::vector<StartPose> starts);
  // Hand-written because the iou_max memo carries a mutex; the cached
  // values travel with the copy, the lock does not.
  GridWorld(const GridWorld& other);
  GridWorld& operator=(const GridWorld& other);

  static GridWorld from_json_file(const std::filesystem::path& path);

  int width() const { return width_; }
  int height() const { return height_; }
  bool in_bounds(Cell c) const {
    return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_;
  }
  bool is_wall(Cell c) const { return wall_mask_[index(c)]; }
  bool is_free(Cell c) const { return in_bounds(c) && !is_wall(c); }

  const std::vector<WorldObject>& objects() const { return objects_; }
  const WorldObject& object(const std::string& id) const;  // TaskError if unknown
  const std::vector<StartPose>& starts() const { return starts_; }
  // Sorted unique class ids; their positions define observation channels.
  const std::vector<std::string>& class_ids() const { return class_ids_; }
  // Class index of the object occupying c, or -1 for none.
  int object_class_at(Cell c) const { return object_class_at_[index(c)]; }

  // BFS shortest-path length between two floor cells (4-connected).
  int geodesic(Cell from, Cell to) const;
  // Distance from a floor cell to the nearest footprint cell of an object.
  int geodesic_to_object(Cell from, const std::string& id) const;

  std::size_t index(Cell c) const {
    return static_cast<std::size_t>(c.y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(c.x);
  }

 private:
  friend double iou_max(const GridWorld&, const std::string&, int, int);

  int width_;
  int height_;
  std::vector<char> wall_mask_;
  std::vector<WorldObject> objects_;
  std::vector<StartPose> starts_;
  std::vector<std::string> class_ids_;
  std::vector<int> object_class_at_;
  std::map<std::string, std::size_t> object_index_;
  // One distance field per object; -1 marks unreachable cells.
  std::vector<std::vector<int>> object_distance_;
  // Memo for iou_max keyed by (target, radius, view_size): the exhaustive
  // pose sweep is pure but costs a full grid scan, and step() wants it on
  // every stop. Guarded so concurrent trainings can share one world.
  mutable std::mutex iou_max_mutex_;
  mutable std::map<std::tuple<std::string, int, int>, double> iou_max_cache_;
};

// Disjoint near-equal halves of the target-object id set.
struct TargetSplit {
  std::vector<std::string> a;
  std::vector<std::string> b;
};

// Uniformly random partition of the object ids into two disjoint halves
// (sizes differ by at most one; side a takes the extra on odd counts).
// Depends only on the id set and the seed, not on input order.
TargetSplit make_split(std::vector<std::string> object_ids, std::uint64_t seed);

// One environment transition. Non-stop actions earn the geodesic shaping
// reward -0.05 * (dist_after - dist_before); stop ends the episode with
// IoU_t / IoU_max. Hitting the step cap forces done with no extra reward
// beyond the step's own shaping term.
struct Transition {
  AgentState state;
  double reward = 0.0;
  bool done = false;
};
Transition step(const GridWorld& w, const AgentState& s, const std::string& target,
                Action action, const EnvParams& params = {});

// Intersection-over-union between the target's visible footprint and the
// centered framing box of the agent's view window. The window is the
// view_size x view_size block ahead of the agent, column-raycast so cells
// behind walls or out of bounds are hidden; the box is the central
// (view_size - 2)^2 sub-window. Union counts target cells plus box cells
// occupied by any object.
double iou(const GridWorld& w, const AgentState& s, const std::string& target,
           int view_size = 5);

// Exhaustive-search maximum of iou over every free-cell pose within the
// given geodesic radius of the target.
double iou_max(const GridWorld& w, const std::string& target, int radius,
               int view_size = 5);

// Egocentric observation: one-hot channels per view cell
// (hidden, wall, floor, one channel per object class), flattened
// depth-major. Length = view_size^2 * (3 + class count).
std::vector<double> render_observation(const GridWorld& w, Cell cell, Heading heading,
                                       int view_size = 5);

struct EpisodeStep {
  int step = 0;
  Cell cell;
  Heading heading = Heading::kNorth;
  Action action = Action::kStop;
  double reward = 0.0;
  bool done = false;
};

// CSV with columns step,cell_x,cell_y,heading,action,reward,done.
std::string episode_log_csv(const std::vector<EpisodeStep>& steps);

}  // namespace rsim
