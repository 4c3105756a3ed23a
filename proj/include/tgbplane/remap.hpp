#pragma once

#include <bit>
#include <memory>
#include <string>

#include "tgbplane/consumer.hpp"

namespace tgbplane {

// Which slice of which TGB a rank reads for one logical step.
struct SliceRead {
  std::uint64_t tgb_step = 0;
  SliceCoord slice;
  friend bool operator==(const SliceRead&, const SliceRead&) = default;
};

// Reading TGBs written for mesh (D, C) with a new mesh (D', C'), where each
// ratio is a power of two. TGBs are grouped `tgbs_per_group` at a time and
// each group yields `steps_per_group` logical steps:
//
//  - D doubles: one logical step spans two consecutive TGBs; new replica d'
//    reads TGB (d' mod 2) of the group, old slice d'/2.
//  - D halves: one TGB spans two logical steps; at sub-step j new replica d'
//    reads old slice 2d'+j (even slices first).
//
// C follows the same rules. TP and PP never matter.
struct RemapPlan {
  MeshSpec old_mesh;
  MeshSpec new_mesh;
  std::uint32_t dp_grow = 1, dp_shrink = 1;
  std::uint32_t cp_grow = 1, cp_shrink = 1;
  std::uint64_t first_tgb_step = 0;  // TGB step where logical step 0 begins

  std::uint32_t tgbs_per_group() const noexcept { return dp_grow * cp_grow; }
  std::uint32_t steps_per_group() const noexcept { return dp_shrink * cp_shrink; }
  bool identity() const noexcept { return tgbs_per_group() == 1 && steps_per_group() == 1; }

  SliceRead read_for(std::uint64_t logical_step, SliceCoord coord) const {
    if (coord.d >= new_mesh.dp || coord.c >= new_mesh.cp)
      fail(Errc::kCoordinateOutOfMesh, "coordinate outside the new mesh");
    std::uint64_t group = logical_step / steps_per_group();
    std::uint32_t sub = static_cast<std::uint32_t>(logical_step % steps_per_group());
    std::uint32_t sub_d = sub / cp_shrink;
    std::uint32_t sub_c = sub % cp_shrink;
    std::uint32_t off_d = coord.d % dp_grow;
    std::uint32_t off_c = coord.c % cp_grow;
    SliceRead r;
    r.tgb_step = first_tgb_step + group * tgbs_per_group() + off_d * cp_grow + off_c;
    r.slice.d = dp_grow > 1 ? coord.d / dp_grow : coord.d * dp_shrink + sub_d;
    r.slice.c = cp_grow > 1 ? coord.c / cp_grow : coord.c * cp_shrink + sub_c;
    return r;
  }
};

namespace detail {
inline void ratio(std::uint32_t from, std::uint32_t to, std::uint32_t& grow, std::uint32_t& shrink,
                  const char* what) {
  grow = shrink = 1;
  if (to >= from) {
    if (to % from != 0 || !std::has_single_bit(to / from))
      fail(Errc::kUnsupportedRemap, std::string(what) + " " + std::to_string(from) + " -> " + std::to_string(to));
    grow = to / from;
  } else {
    if (from % to != 0 || !std::has_single_bit(from / to))
      fail(Errc::kUnsupportedRemap, std::string(what) + " " + std::to_string(from) + " -> " + std::to_string(to));
    shrink = from / to;
  }
}
}  // namespace detail

// Plan for continuing from `cursor` (a TGB step) under new_spec.
inline RemapPlan remap(const RankSpec& old_spec, const RankSpec& new_spec, const Cursor& cursor) {
  old_spec.validate();
  new_spec.validate();
  RemapPlan p;
  p.old_mesh = old_spec.mesh();
  p.new_mesh = new_spec.mesh();
  detail::ratio(old_spec.dp, new_spec.dp, p.dp_grow, p.dp_shrink, "dp");
  detail::ratio(old_spec.cp, new_spec.cp, p.cp_grow, p.cp_shrink, "cp");
  p.first_tgb_step = cursor.step;
  return p;
}

// Consumes logical steps of a remapped mesh from committed manifests.
class RemapReader {
 public:
  RemapReader(std::shared_ptr<ObjectStore> store, std::string ns, RankSpec new_spec, RemapPlan plan,
              ConsumerOptions opts = {})
      : spec_(new_spec),
        coord_(project(new_spec)),
        plan_(plan),
        reader_(std::make_shared<detail::SliceReader>(store)),
        follower_(store, std::move(ns), opts.clock ? opts.clock : default_clock(), opts.poll_interval) {
    if (!(spec_.mesh() == plan_.new_mesh)) fail(Errc::kInvalidTopology, "rank spec does not match plan");
  }

  Batch next_batch() {
    SliceRead target = plan_.read_for(logical_step_, coord_);
    const Manifest* m = &follower_.current();
    if (!m->has_step(target.tgb_step)) {
      if (target.tgb_step < m->trim_floor) fail(Errc::kStepReclaimed, "step " + std::to_string(target.tgb_step));
      follower_.poll();
      m = &follower_.current();
      if (target.tgb_step < m->trim_floor) fail(Errc::kStepReclaimed, "step " + std::to_string(target.tgb_step));
      if (!m->has_step(target.tgb_step))
        return {BatchStatus::kNotYetAvailable, {}, logical_step_, {m->version, target.tgb_step}};
    }
    const auto& desc = m->at_step(target.tgb_step);
    if (desc.mesh != plan_.old_mesh)
      fail(Errc::kInvalidTopology, "TGB at step " + std::to_string(target.tgb_step) + " has another layout");
    Bytes data = reader_->read(desc, target.slice);
    Batch b{BatchStatus::kOk, std::move(data), logical_step_, {m->version, target.tgb_step}};
    ++logical_step_;
    return b;
  }

  std::uint64_t logical_step() const noexcept { return logical_step_; }
  const RemapPlan& plan() const noexcept { return plan_; }

 private:
  RankSpec spec_;
  SliceCoord coord_;
  RemapPlan plan_;
  std::shared_ptr<detail::SliceReader> reader_;
  detail::ManifestFollower follower_;
  std::uint64_t logical_step_ = 0;
};

}  // namespace tgbplane
