#include "skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>

namespace alca {

SkeletonSequence SkeletonSequence::zeros(int frames) {
  ALCA_THROW_IF(frames < 1, ErrorKind::Config, "sequence needs >= 1 frame");
  SkeletonSequence s;
  s.frames = frames;
  s.data.assign(static_cast<size_t>(kCoords) * frames * kJoints * kPerformers,
                0.0f);
  return s;
}

float& SkeletonSequence::at(int c, int t, int u, int m) {
  return data[((static_cast<size_t>(c) * frames + t) * kJoints + u) *
                  kPerformers +
              m];
}

float SkeletonSequence::at(int c, int t, int u, int m) const {
  return data[((static_cast<size_t>(c) * frames + t) * kJoints + u) *
                  kPerformers +
              m];
}

void SkeletonSequence::validate() const {
  ALCA_THROW_IF(frames < 1, ErrorKind::Data, "sequence has no frames");
  ALCA_THROW_IF(data.size() != expected_size(), ErrorKind::Data,
                "sequence buffer size mismatch");
  for (float v : data) {
    ALCA_THROW_IF(!std::isfinite(v), ErrorKind::Data,
                  "sequence holds a non-finite coordinate");
  }
}

namespace {

struct Line {
  std::string text;
  int number = 0;
};

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  Line next(const char* what) {
    std::string text;
    while (std::getline(in_, text)) {
      ++number_;
      // Tolerate blank lines and CR line endings.
      if (!text.empty() && text.back() == '\r') text.pop_back();
      if (!text.empty()) return {text, number_};
    }
    fail(ErrorKind::Data, cat("line ", number_ + 1, ": unexpected end of file while reading ", what));
  }

 private:
  std::istream& in_;
  int number_ = 0;
};

int parse_int(const Line& line, const char* what) {
  std::istringstream is(line.text);
  long long v = 0;
  if (!(is >> v)) {
    fail(ErrorKind::Data,
         cat("line ", line.number, ": expected ", what, ", got '", line.text, "'"));
  }
  return static_cast<int>(v);
}

struct RawBody {
  long long tracking_id = 0;
  // 25 joints x 3 coords
  std::array<float, kJoints * kCoords> xyz{};
};

struct RawFrame {
  std::vector<RawBody> bodies;
};

}  // namespace

ParseResult parse_ntu_skeleton(std::istream& input) {
  LineReader reader(input);
  const Line header = reader.next("frame count");
  const int frame_count = parse_int(header, "frame count");
  ALCA_THROW_IF(frame_count < 1, ErrorKind::Data, "line ", header.number,
                ": frame count must be >= 1, got ", frame_count);

  std::vector<RawFrame> frames(static_cast<size_t>(frame_count));
  ParseResult result;

  for (int t = 0; t < frame_count; ++t) {
    const Line body_line = reader.next("body count");
    const int body_count = parse_int(body_line, "body count");
    ALCA_THROW_IF(body_count < 0, ErrorKind::Data, "line ", body_line.number,
                  ": negative body count in frame ", t);
    for (int b = 0; b < body_count; ++b) {
      RawBody body;
      const Line info = reader.next("body info");
      {
        std::istringstream is(info.text);
        if (!(is >> body.tracking_id)) {
          fail(ErrorKind::Data, cat("line ", info.number,
                                    ": expected a tracking id in frame ", t));
        }
      }
      const Line jc = reader.next("joint count");
      const int joint_count = parse_int(jc, "joint count");
      ALCA_THROW_IF(joint_count != kJoints, ErrorKind::Data, "line ", jc.number,
                    ": joint count ", joint_count, " != ", kJoints,
                    " in frame ", t);
      for (int u = 0; u < kJoints; ++u) {
        const Line jl = reader.next("joint coordinates");
        std::istringstream is(jl.text);
        float x, y, z;
        if (!(is >> x >> y >> z)) {
          fail(ErrorKind::Data, cat("line ", jl.number,
                                    ": expected x y z for joint ", u,
                                    " of frame ", t));
        }
        ALCA_THROW_IF(!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z),
                      ErrorKind::Data, "line ", jl.number,
                      ": non-finite coordinate");
        body.xyz[static_cast<size_t>(u) * kCoords + 0] = x;
        body.xyz[static_cast<size_t>(u) * kCoords + 1] = y;
        body.xyz[static_cast<size_t>(u) * kCoords + 2] = z;
      }
      frames[static_cast<size_t>(t)].bodies.push_back(body);
    }
    if (body_count > kPerformers) {
      result.warnings.push_back({t, cat("frame ", t, " has ", body_count,
                                        " bodies, keeping ", kPerformers)});
    }
  }

  // Rank tracking ids by presence (frame count), ties by first appearance.
  struct IdStat {
    int presence = 0;
    int first_seen = 0;
  };
  std::map<long long, IdStat> stats;
  int order = 0;
  for (const auto& frame : frames) {
    for (const auto& body : frame.bodies) {
      auto it = stats.find(body.tracking_id);
      if (it == stats.end()) {
        stats[body.tracking_id] = {1, order++};
      } else {
        it->second.presence++;
      }
    }
  }
  std::vector<std::pair<long long, IdStat>> ranked(stats.begin(), stats.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.presence != b.second.presence) {
      return a.second.presence > b.second.presence;
    }
    return a.second.first_seen < b.second.first_seen;
  });

  SkeletonSequence seq = SkeletonSequence::zeros(frame_count);
  const int kept = std::min<int>(kPerformers, static_cast<int>(ranked.size()));
  for (int slot = 0; slot < kept; ++slot) {
    const long long id = ranked[static_cast<size_t>(slot)].first;
    seq.performer_mask[static_cast<size_t>(slot)] = true;
    for (int t = 0; t < frame_count; ++t) {
      for (const auto& body : frames[static_cast<size_t>(t)].bodies) {
        if (body.tracking_id != id) continue;
        for (int u = 0; u < kJoints; ++u) {
          for (int c = 0; c < kCoords; ++c) {
            seq.at(c, t, u, slot) = body.xyz[static_cast<size_t>(u) * kCoords + c];
          }
        }
        break;
      }
    }
  }
  result.sequence = std::move(seq);
  return result;
}

ParseResult parse_ntu_skeleton_file(const std::string& path) {
  std::ifstream in(path);
  ALCA_THROW_IF(!in, ErrorKind::Data, "cannot open '", path, "'");
  try {
    ParseResult r = parse_ntu_skeleton(in);
    r.sequence.label = label_from_filename(path);
    return r;
  } catch (const Error& e) {
    throw Error(e.kind(), cat(path, ": ", e.what()));
  }
}

int label_from_filename(const std::string& filename) {
  // Use the last 'A'-digits group so directory names cannot interfere.
  int label = -1;
  for (size_t i = 0; i + 1 < filename.size(); ++i) {
    if ((filename[i] == 'A' || filename[i] == 'a') &&
        std::isdigit(static_cast<unsigned char>(filename[i + 1]))) {
      int v = 0;
      size_t j = i + 1;
      while (j < filename.size() &&
             std::isdigit(static_cast<unsigned char>(filename[j]))) {
        v = v * 10 + (filename[j] - '0');
        ++j;
      }
      label = v - 1;  // action codes are 1-based
    }
  }
  return label;
}

SkeletonSequence normalize_length(const SkeletonSequence& seq, int target) {
  ALCA_THROW_IF(seq.frames < 1, ErrorKind::Config,
                "normalize_length: empty sequence");
  ALCA_THROW_IF(target < 1, ErrorKind::Config,
                "normalize_length: target must be >= 1");
  if (seq.frames == target) return seq;
  SkeletonSequence out = SkeletonSequence::zeros(target);
  out.label = seq.label;
  out.performer_mask = seq.performer_mask;
  if (seq.frames > target) {
    for (int i = 0; i < target; ++i) {
      const int src = static_cast<int>(
          (static_cast<int64_t>(i) * seq.frames) / target);
      for (int c = 0; c < kCoords; ++c) {
        for (int u = 0; u < kJoints; ++u) {
          for (int m = 0; m < kPerformers; ++m) {
            out.at(c, i, u, m) = seq.at(c, src, u, m);
          }
        }
      }
    }
  } else {
    for (int t = 0; t < seq.frames; ++t) {
      for (int c = 0; c < kCoords; ++c) {
        for (int u = 0; u < kJoints; ++u) {
          for (int m = 0; m < kPerformers; ++m) {
            out.at(c, t, u, m) = seq.at(c, t, u, m);
          }
        }
      }
    }
  }
  return out;
}

namespace {

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

Vec3 joint_of(const SkeletonSequence& s, int t, int u, int m) {
  return {s.at(0, t, u, m), s.at(1, t, u, m), s.at(2, t, u, m)};
}

Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a.x - b.x, a.y - b.y, a.z - b.z};
}

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

}  // namespace

FrontalAlignResult frontal_align(const SkeletonSequence& seq,
                                 const FrontalAlignOptions& options) {
  seq.validate();
  const auto& jt = options.joints;
  const Vec3 left = joint_of(seq, 0, jt.left_hip, 0);
  const Vec3 right = joint_of(seq, 0, jt.right_hip, 0);
  const Vec3 hip = joint_of(seq, 0, jt.central_hip, 0);
  const Vec3 spine = joint_of(seq, 0, jt.spine, 0);
  const Vec3 facing = cross(right - left, spine - hip);

  FrontalAlignResult result;
  // Horizontal projection of the facing vector; if it vanishes (zeroed
  // skeleton, collinear hips/spine, or facing straight up) the yaw is
  // undefined and we keep the identity rotation.
  const double horiz = std::hypot(facing.x, facing.z);
  double yaw = 0.0;
  if (horiz < 1e-9) {
    result.degenerate = true;
  } else {
    // Angle that rotates (facing.x, facing.z) onto (0, +1) about the y axis.
    yaw = std::atan2(facing.x, facing.z);
  }
  result.yaw_radians = yaw;

  const double cy = std::cos(-yaw);
  const double sy = std::sin(-yaw);
  SkeletonSequence out = seq;
  for (int t = 0; t < seq.frames; ++t) {
    for (int u = 0; u < kJoints; ++u) {
      for (int m = 0; m < kPerformers; ++m) {
        const double x = seq.at(0, t, u, m);
        const double z = seq.at(2, t, u, m);
        // Rotation about y: x' = cos*x + sin*z, z' = -sin*x + cos*z.
        out.at(0, t, u, m) = static_cast<float>(cy * x + sy * z);
        out.at(2, t, u, m) = static_cast<float>(-sy * x + cy * z);
      }
    }
  }
  if (options.center_origin) {
    const Vec3 origin = joint_of(out, 0, jt.central_hip, 0);
    for (int t = 0; t < seq.frames; ++t) {
      for (int u = 0; u < kJoints; ++u) {
        for (int m = 0; m < kPerformers; ++m) {
          // Absent performers stay zero-filled rather than being shifted to
          // a spurious constant offset.
          if (!seq.performer_mask[static_cast<size_t>(m)]) continue;
          out.at(0, t, u, m) -= static_cast<float>(origin.x);
          out.at(1, t, u, m) -= static_cast<float>(origin.y);
          out.at(2, t, u, m) -= static_cast<float>(origin.z);
        }
      }
    }
  }
  result.sequence = std::move(out);
  return result;
}

}  // namespace alca
