#include <cmath>
#include <map>
#include <set>

#include "doctest.h"

#include "fribble/grammar.hpp"
#include "fribble/object_model.hpp"
#include "support.hpp"

using namespace fribble;

namespace {

const PartLibrary& library() {
  static const PartLibrary lib = PartLibrary::load(test::data_dir() / "parts47.json");
  return lib;
}

const Grammar& grammar() {
  static const Grammar g = Grammar::load(test::data_dir() / "fribble.grammar");
  return g;
}

std::size_t agreement(const VoxelObject& a, const VoxelObject& b) {
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) same += a.data()[i] == b.data()[i];
  return same;
}

}  // namespace

TEST_CASE("part library covers the grammar") {
  const PartLibrary& lib = library();
  CHECK(lib.parts().size() == 47);
  CHECK(lib.trunk() == "P5");
  CHECK_NOTHROW(lib.check_covers(grammar()));
  for (const auto& [id, p] : lib.parts()) {
    CHECK(p.instance_count >= 1);
    CHECK(p.orientations.size() == static_cast<std::size_t>(p.instance_count));
    CHECK(p.dims.x > 0);
    CHECK(p.dims.y > 0);
    CHECK(p.dims.z > 0);
  }
  const PartLibrary small = PartLibrary::from_json(nlohmann::json::parse(
      R"({"trunk":"t","parts":[{"id":"t","primitive":"box","dims":[4,4,4],"location":[0,0,0],"count":1,"orientations":[[0,0,0]]}]})"));
  CHECK_THROWS_AS(small.check_covers(grammar()), PartLibraryError);
}

TEST_CASE("slot groups share one location each") {
  const Grammar& g = grammar();
  std::map<std::string, Vec3> slot_location;
  std::set<std::tuple<double, double, double>> distinct;
  for (SymbolId slot : g.symbols_of_kind(SymbolKind::kPreterminal)) {
    std::optional<Vec3> loc;
    for (int p : g.alternatives(slot)) {
      const PartSpec& spec = library().at(g.symbol(g.production(p).rhs[0]).name);
      if (!loc) loc = spec.location;
      CHECK(spec.location == *loc);
    }
    distinct.insert({loc->x, loc->y, loc->z});
  }
  CHECK(distinct.size() == 4);
  CHECK(library().at("P5").location == Vec3{});
}

TEST_CASE("malformed libraries are rejected") {
  auto parse = [](const char* text) { return PartLibrary::from_json(nlohmann::json::parse(text)); };
  CHECK_THROWS_AS(parse(R"({"trunk":"t","parts":[]})"), PartLibraryError);
  CHECK_THROWS_AS(
      parse(R"({"trunk":"t","parts":[{"id":"t","primitive":"blob","dims":[1,1,1],"location":[0,0,0],"count":1,"orientations":[[0,0,0]]}]})"),
      PartLibraryError);
  CHECK_THROWS_AS(
      parse(R"({"trunk":"t","parts":[{"id":"t","primitive":"box","dims":[1,1,1],"location":[0,0,0],"count":2,"orientations":[[0,0,0]]}]})"),
      PartLibraryError);
  CHECK_THROWS_AS(
      parse(R"({"trunk":"t","parts":[{"id":"t","primitive":"box","dims":[1,0,1],"location":[0,0,0],"count":1,"orientations":[[0,0,0]]}]})"),
      PartLibraryError);
  CHECK_THROWS_AS(parse(R"({"trunk":"t","parts":[{"id":"t"}]})"), PartLibraryError);
  const PartLibrary round = PartLibrary::from_json(library().to_json());
  for (const auto& [id, p] : library().parts()) {
    const std::vector<std::string> one = {id};
    CHECK(realize(one, round, 0.3) == realize(one, library(), 0.3));
  }
}

TEST_CASE("realize") {
  const PartLibrary& lib = library();
  SUBCASE("trunk alone") {
    const std::vector<std::string> parts = {"P5"};
    const VoxelObject v = realize(parts, lib, 1.0);
    const auto b = v.bounds();
    const Vec3 dims = lib.at("P5").dims;
    for (int a = 0; a < 3; ++a) {
      CHECK(std::abs(b.extent(a) - dims[a]) <= 1);
      // Centered on the grid center.
      CHECK(std::abs(0.5 * (b.lo[a] + b.hi[a]) - v.center()) <= 0.5);
    }
    // A box voxelizes to its full bounding box.
    CHECK(v.count() == static_cast<std::size_t>(b.extent(0)) * b.extent(1) * b.extent(2));
  }
  SUBCASE("duplicates overlay") {
    const std::vector<std::string> once = {"P4", "P1", "P2", "P3", "P5"};
    const std::vector<std::string> twice = {"P4", "P1", "P1", "P2", "P3", "P5"};
    CHECK(realize(once, lib, 0.3) == realize(twice, lib, 0.3));
  }
  SUBCASE("scale 0.3 shrinks every part's extents") {
    for (const auto& [id, spec] : lib.parts()) {
      const std::vector<std::string> one = {id};
      const VoxelObject full = realize(one, lib, 1.0, 128);
      const VoxelObject small = realize(one, lib, 0.3, 128);
      for (int a = 0; a < 3; ++a) {
        CAPTURE(id);
        CAPTURE(a);
        CHECK(std::abs(small.bounds().extent(a) - 0.3 * full.bounds().extent(a)) <= 1.0);
      }
    }
  }
  SUBCASE("trunk present in every fribble") {
    Rng rng(3);
    const std::vector<std::string> trunk = {"P5"};
    const VoxelObject t = realize(trunk, lib, 0.3);
    for (int i = 0; i < 30; ++i) {
      const auto parts = terminal_names(sample_derivation(grammar(), rng), grammar());
      const VoxelObject v = realize(parts, lib, 0.3);
      CHECK(v.count() > t.count());
      for (std::size_t k = 0; k < t.data().size(); ++k) {
        if (t.data()[k]) REQUIRE(v.data()[k]);
      }
    }
  }
  SUBCASE("deterministic") {
    const std::vector<std::string> parts = {"P12", "P7", "P8", "P10", "P5"};
    CHECK(realize(parts, lib, 0.3) == realize(parts, lib, 0.3));
  }
  SUBCASE("errors") {
    const std::vector<std::string> unknown = {"P99"};
    CHECK_THROWS_AS(realize(unknown, lib, 0.3), RealizeError);
    const std::vector<std::string> ok = {"P5"};
    CHECK_THROWS_AS(realize(ok, lib, 0.05), RealizeError);
    CHECK_THROWS_AS(realize(ok, lib, 2.5), RealizeError);
    const std::vector<std::string> far = {"P4", "P5"};
    CHECK_THROWS_AS(realize(far, lib, 2.0), RealizeError);
  }
}

TEST_CASE("viewpoint grid") {
  const auto& grid = viewpoint_grid();
  REQUIRE(grid.size() == 27);
  CHECK(grid.front() == Viewpoint{0, -25, 0});
  CHECK(grid.back() == Viewpoint{320, 25, 0});
  std::set<double> headings, pitches;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    headings.insert(grid[i].heading);
    pitches.insert(grid[i].pitch);
    CHECK(grid[i].roll == 0.0);
    if (i > 0) {
      const bool ordered = grid[i - 1].heading < grid[i].heading ||
                           (grid[i - 1].heading == grid[i].heading && grid[i - 1].pitch < grid[i].pitch);
      CHECK(ordered);
    }
  }
  CHECK(headings.size() == 9);
  CHECK(pitches == std::set<double>{-25, 0, 25});
}

TEST_CASE("rotation") {
  const std::vector<std::string> parts = {"P24", "P32", "P33", "P36", "P5"};
  const VoxelObject v = realize(parts, library(), 0.3);
  REQUIRE(v.count() >= 100);
  CHECK(rotate(v, {0, 0, 0}) == v);
  const VoxelObject full_turn = rotate(v, {360, 0, 0});
  CHECK(agreement(full_turn, v) >= 0.99 * v.data().size());
  CHECK(intersection_over_union(full_turn, v) > 0.99);
  for (const auto& vp : viewpoint_grid()) {
    const VoxelObject r = rotate(v, vp);
    const double change = std::abs(static_cast<double>(r.count()) - static_cast<double>(v.count()));
    CAPTURE(vp.heading);
    CAPTURE(vp.pitch);
    CHECK(change <= 0.05 * v.count());
  }
  // Quarter turns are exact permutations on the grid.
  const VoxelObject q = rotate(rotate(rotate(rotate(v, {90, 0, 0}), {90, 0, 0}), {90, 0, 0}), {90, 0, 0});
  CHECK(q == v);
}

TEST_CASE("voxel export") {
  const std::vector<std::string> parts = {"P4", "P1", "P2", "P3", "P5"};
  const VoxelObject v = realize(parts, library(), 0.3);
  const auto bytes = encode_voxels(v);
  REQUIRE(bytes.size() == 16 + 64 * 64 * 64 / 8);
  CHECK(bytes[0] == 'F');
  CHECK(bytes[3] == 'X');
  CHECK(io::get_le<std::uint16_t>(bytes, 4) == 64);
  CHECK(io::get_le<float>(bytes, 12) == doctest::Approx(0.3));
  const VoxelObject back = decode_voxels(bytes);
  CHECK(back == v);
  const auto dir = test::scratch("voxels");
  write_voxels(v, dir / "a.voxels");
  CHECK(read_voxels(dir / "a.voxels") == v);
  std::vector<std::uint8_t> bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS(decode_voxels(bad));
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS(decode_voxels(bad));
}
