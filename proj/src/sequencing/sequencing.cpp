#include "scpc/sequencing.hpp"

#include <algorithm>
#include <sstream>

namespace scpc {

std::string to_string(Direction d) { return d == Direction::Forward ? "forward" : "backward"; }

Direction direction_from_string(const std::string& name) {
  if (name == "forward") return Direction::Forward;
  if (name == "backward") return Direction::Backward;
  throw ConfigError("unknown direction '" + name + "' (expected forward or backward)");
}

bool AnchorSpec::valid() const {
  const std::size_t i = row, j = col, k = perception, s = grid_side;
  if (k == 0) return false;
  if (direction == Direction::Forward) return std::max(i + k + 2, j + k + 2) <= s;
  return i >= 2 && j >= 2 && i + k <= s && j + k <= s;
}

std::vector<std::size_t> IndexSequence::flat(std::size_t grid_side) const {
  std::vector<std::size_t> out;
  out.reserve(coords.size());
  for (const auto& c : coords) out.push_back(c.row * grid_side + c.col);
  return out;
}

std::vector<AnchorSpec> enumerate_anchors(std::size_t grid_side, std::size_t perception, Direction direction) {
  if (perception == 0) throw ConfigError("perception k must be at least 1");
  if (grid_side < perception) {
    throw ConfigError("grid side " + std::to_string(grid_side) + " smaller than perception " +
                      std::to_string(perception));
  }
  std::vector<AnchorSpec> out;
  for (std::size_t i = 0; i < grid_side; ++i)
    for (std::size_t j = 0; j < grid_side; ++j) {
      AnchorSpec a{i, j, perception, direction, grid_side};
      if (a.valid()) out.push_back(a);
    }
  return out;
}

std::pair<IndexSequence, IndexSequence> build_sequences(const AnchorSpec& a) {
  if (!a.valid()) {
    throw DimensionError("anchor (" + std::to_string(a.row) + "," + std::to_string(a.col) + ") with k=" +
                         std::to_string(a.perception) + " violates " + to_string(a.direction) +
                         " bounds on a grid of side " + std::to_string(a.grid_side));
  }
  const std::size_t k = a.perception;
  IndexSequence train{{}, SequenceRole::Train, 0};
  IndexSequence target{{}, SequenceRole::Target, 0};
  for (std::size_t r = a.row; r < a.row + k; ++r)
    for (std::size_t c = a.col; c < a.col + k; ++c) train.coords.push_back({r, c});

  // The (k+2)-block shares the training block's top-left corner going
  // forward and its bottom-right corner going backward.
  const std::size_t top = a.direction == Direction::Forward ? a.row : a.row - 2;
  const std::size_t left = a.direction == Direction::Forward ? a.col : a.col - 2;
  for (std::size_t r = top; r < top + k + 2; ++r)
    for (std::size_t c = left; c < left + k + 2; ++c) {
      const bool in_block = r >= a.row && r < a.row + k && c >= a.col && c < a.col + k;
      if (!in_block) target.coords.push_back({r, c});
    }
  return {std::move(train), std::move(target)};
}

std::vector<ContrastiveSample> make_samples(std::size_t grid_side, std::size_t variant_count,
                                            std::size_t perception, std::span<const Direction> directions) {
  std::vector<ContrastiveSample> out;
  for (Direction d : directions) {
    for (const auto& anchor : enumerate_anchors(grid_side, perception, d)) {
      auto [train, target] = build_sequences(anchor);
      for (std::size_t t = 0; t < variant_count; ++t) {
        ContrastiveSample s{anchor, train, target, static_cast<int>(t)};
        s.target.texture_id = static_cast<int>(t);
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

std::vector<ContrastiveSample> make_samples(std::span<const PatchGrid> grids, std::size_t perception,
                                            std::span<const Direction> directions) {
  if (grids.empty()) throw ConfigError("make_samples needs at least the original grid");
  for (std::size_t t = 0; t < grids.size(); ++t) {
    if (!(grids[t].spec == grids[0].spec)) {
      throw DimensionError("make_samples: grid " + std::to_string(t) + " uses a different GridSpec");
    }
  }
  return make_samples(grids[0].side(), grids.size(), perception, directions);
}

namespace {
void write_coords(std::ostringstream& os, const char* label, const IndexSequence& seq) {
  os << label;
  for (const auto& c : seq.coords) os << " (" << c.row << ',' << c.col << ')';
  os << '\n';
}
}  // namespace

std::string format_gridcheck(const GridSpec& spec, std::size_t perception, std::span<const Direction> directions) {
  spec.validate();
  const std::size_t s = spec.grid_side();
  std::ostringstream os;
  os << "gridcheck v1\n";
  os << "grid " << s << 'x' << s << '\n';
  os << "image_side " << spec.image_side << " patch_side " << spec.patch_side << " stride " << spec.stride << '\n';
  os << "perception " << perception << '\n';
  for (Direction d : directions) {
    const auto anchors = enumerate_anchors(s, perception, d);
    os << "direction " << to_string(d) << " anchors " << anchors.size() << '\n';
    for (const auto& a : anchors) {
      const auto [train, target] = build_sequences(a);
      os << "anchor " << a.row << ' ' << a.col << " train " << train.coords.size() << " target "
         << target.coords.size() << '\n';
      write_coords(os, "train", train);
      write_coords(os, "target", target);
    }
  }
  os << "end\n";
  return os.str();
}

}  // namespace scpc
