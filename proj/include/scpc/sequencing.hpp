#pragma once

#include <compare>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scpc/image.hpp"

namespace scpc {

// Scan direction of the training block over the patch grid.
//   Forward : target L-region lies to the right of and below the block.
//   Backward: target L-region lies to the left of and above the block.
enum class Direction { Forward, Backward };

std::string to_string(Direction d);
Direction direction_from_string(const std::string& name);

struct GridCoord {
  std::size_t row = 0;
  std::size_t col = 0;
  auto operator<=>(const GridCoord&) const = default;
};

struct AnchorSpec {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t perception = 1;  // k: training block side, in patches
  Direction direction = Direction::Forward;
  std::size_t grid_side = 0;

  bool valid() const;
  bool operator==(const AnchorSpec&) const = default;
};

enum class SequenceRole { Train, Target };

struct IndexSequence {
  std::vector<GridCoord> coords;  // row-major
  SequenceRole role = SequenceRole::Train;
  int texture_id = 0;

  // Flat row-major cell indices into an s×s grid.
  std::vector<std::size_t> flat(std::size_t grid_side) const;
};

// One training instance: training block from the original grid, targets from
// grid `texture_id` (0 = same image).
struct ContrastiveSample {
  AnchorSpec anchor;
  IndexSequence train;
  IndexSequence target;
  int texture_id = 0;
};

// All anchors satisfying the direction's bounds, row-major. Returns an empty
// list when s < k+2; throws ConfigError when s < k or k == 0.
std::vector<AnchorSpec> enumerate_anchors(std::size_t grid_side, std::size_t perception, Direction direction);

// Training block (k² cells) and target L-region ((k+2)² − k² = 4k+4 cells).
std::pair<IndexSequence, IndexSequence> build_sequences(const AnchorSpec& anchor);

// Anchors × directions × texture variants, in that nesting order.
std::vector<ContrastiveSample> make_samples(std::span<const PatchGrid> grids, std::size_t perception,
                                            std::span<const Direction> directions);
// Same enumeration from the geometry alone (grid_side and variant count).
std::vector<ContrastiveSample> make_samples(std::size_t grid_side, std::size_t variant_count,
                                            std::size_t perception, std::span<const Direction> directions);

// Text dump used by the gridcheck command; format is versioned and byte-stable.
std::string format_gridcheck(const GridSpec& spec, std::size_t perception, std::span<const Direction> directions);

}  // namespace scpc
