#ifndef ALCA_SKELETON_HPP
#define ALCA_SKELETON_HPP

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "common.hpp"
#include "topology.hpp"

namespace alca {

constexpr int kCoords = 3;      // x, y, z in meters
constexpr int kJoints = 25;     // joints per body
constexpr int kPerformers = 2;  // performer slots, absent slot zero-filled
constexpr int kTargetFrames = 75;

// One motion clip: float32 storage of shape (C, T, U, M) laid out row-major,
// a class label and a per-slot presence mask.
struct SkeletonSequence {
  int frames = 0;
  std::vector<float> data;  // kCoords * frames * kJoints * kPerformers
  int label = -1;
  std::array<bool, kPerformers> performer_mask = {false, false};

  static SkeletonSequence zeros(int frames);
  float& at(int c, int t, int u, int m);
  float at(int c, int t, int u, int m) const;
  size_t expected_size() const {
    return static_cast<size_t>(kCoords) * frames * kJoints * kPerformers;
  }
  void validate() const;
};

struct ParseWarning {
  int frame = -1;
  std::string message;
};

struct ParseResult {
  SkeletonSequence sequence;
  std::vector<ParseWarning> warnings;
};

// Text layout: line 1 is the frame count; each frame starts with a body-count
// line; each body is one info line (first token = tracking id), a joint-count
// line that must read 25, then 25 joint lines whose first three fields are
// x y z (trailing fields ignored). When more than two bodies appear, the two
// tracking ids present in the most frames are kept (ties: earliest first
// appearance); the label stays -1 here and is assigned from the filename by
// the caller.
ParseResult parse_ntu_skeleton(std::istream& input);
ParseResult parse_ntu_skeleton_file(const std::string& path);

// Class id from an NTU-style file name: the zero-padded integer after the
// final 'A' marker, e.g. S001C001P001R001A042.skeleton -> 41 (0-based).
int label_from_filename(const std::string& filename);

// Uniform index sampling for long clips (keep floor(i*T/target)), trailing
// zero padding for short ones. Always returns exactly `target` frames.
SkeletonSequence normalize_length(const SkeletonSequence& seq, int target = kTargetFrames);

struct FrontalAlignOptions {
  HipSpineJoints joints;
  bool center_origin = true;  // translate performer 1's frame-0 hip to origin
};

struct FrontalAlignResult {
  SkeletonSequence sequence;
  bool degenerate = false;  // facing undefined; identity rotation applied
  double yaw_radians = 0.0;
};

// Rotates the whole clip about the vertical (y) axis so that the first
// performer's frame-0 facing direction — the cross product of (left hip ->
// right hip) and (central hip -> spine) — points along +z, then optionally
// translates the frame-0 central hip to the origin. A rigid transform:
// pairwise joint distances are preserved.
FrontalAlignResult frontal_align(const SkeletonSequence& seq,
                                 const FrontalAlignOptions& options = {});

}  // namespace alca

#endif
