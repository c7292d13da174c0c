#include <gtest/gtest.h>

#include <set>

#include "sa/json_io.hpp"
#include "sa/projection.hpp"
#include "support/oracles.hpp"
#include "support/scenes.hpp"

namespace {

using sa::Point3;
using testing_support::uniform;

sa::CameraPose nadir(Point3 pos) {
  sa::CameraPose cam;
  cam.position = pos;
  cam.rotation = sa::look_at(pos, {pos.x, pos.y, 0});
  return cam;
}

// Closed-form homography from wall-local (s, t) to pixels:
// K [R e_s | R e_t | R (W0 - C)], with e_s, e_t the wall edge vectors.
Eigen::Matrix3d analytic_homography(const sa::CameraPose& cam, const sa::WallRect& w) {
  auto vec = [](Point3 p) { return Eigen::Vector3d(p.x, p.y, p.z); };
  Eigen::Matrix3d m;
  m.col(0) = cam.rotation * vec(w.corners[1] - w.corners[0]);
  m.col(1) = cam.rotation * vec(w.corners[3] - w.corners[0]);
  m.col(2) = cam.rotation * vec(w.corners[0] - cam.position);
  return cam.intrinsics() * m;
}

double rel_err(sa::PixelPoint a, sa::PixelPoint b) {
  return std::hypot(a.x - b.x, a.y - b.y) / std::max(1.0, std::hypot(b.x, b.y));
}

TEST(ZoomToFov, Values) {
  EXPECT_EQ(sa::zoom_to_fov(1, 60), 60.0);
  EXPECT_NEAR(sa::zoom_to_fov(2, 60), 32.2042, 1e-3);
  double prev = 60;
  for (double z = 1.5; z < 1e6; z *= 1.7) {
    const double f = sa::zoom_to_fov(z, 60);
    EXPECT_LT(f, prev);
    prev = f;
  }
  EXPECT_LT(prev, 1e-3);
  EXPECT_THROW(sa::zoom_to_fov(0.5, 60), sa::ProjectionError);
}

TEST(ProjectPoint, OpticalAxisAndBehind) {
  const auto cam = nadir({0, 0, 10});
  const auto p = sa::project_point(cam, {0, 0, 0});
  EXPECT_TRUE(p.in_front);
  EXPECT_NEAR(p.pixel.x, 320, 1e-12);
  EXPECT_NEAR(p.pixel.y, 240, 1e-12);
  EXPECT_FALSE(sa::project_point(cam, {0, 0, 20}).in_front);
  EXPECT_FALSE(sa::project_point(cam, {5, 0, 10}).in_front);
}

TEST(ProjectPoint, ImageOrientation) {
  // Looking north from the origin: east is image right, up is image top.
  sa::CameraPose cam;
  cam.position = {0, 0, 0};
  cam.rotation = sa::look_at({0, 0, 0}, {0, 10, 0});
  const auto right = sa::project_point(cam, {1, 10, 0});
  const auto up = sa::project_point(cam, {0, 10, 1});
  EXPECT_GT(right.pixel.x, 320);
  EXPECT_LT(up.pixel.y, 240);
  // Focal length from the horizontal field of view.
  const auto edge = sa::project_point(cam, {10 * std::tan(sa::deg2rad(30)), 10, 0});
  EXPECT_NEAR(edge.pixel.x, 640, 1e-9);
}

TEST(ProjectPoint, UnprojectRoundTrip) {
  testing_support::Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const auto cw = testing_support::random_camera_wall(rng);
    const sa::PixelPoint px{uniform(rng, 0, 640), uniform(rng, 0, 480)};
    const double depth = uniform(rng, 0.5, 500);
    const auto back = sa::project_point(cw.cam, sa::unproject(cw.cam, px, depth));
    ASSERT_TRUE(back.in_front);
    EXPECT_NEAR(back.pixel.x, px.x, 1e-6);
    EXPECT_NEAR(back.pixel.y, px.y, 1e-6);
    EXPECT_NEAR(back.depth, depth, 1e-9 * depth);
  }
}

TEST(CameraPose, Validation) {
  sa::CameraPose cam;
  EXPECT_NO_THROW(cam.validate());
  cam.rotation(0, 0) = 2;
  EXPECT_THROW(cam.validate(), sa::ProjectionError);
  cam = {};
  cam.zoom = 0.5;
  EXPECT_THROW(cam.validate(), sa::ProjectionError);
}

TEST(WallHomography, SymmetricCaseIsAffine) {
  const auto wall = sa::WallRect::make("w", {Point3{-10, 0, 0}, {10, 0, 0}, {10, 0, 10}, {-10, 0, 10}});
  // Outward normal is -y; camera on that side looking straight at the center.
  sa::CameraPose cam;
  cam.position = {0, -30, 5};
  cam.rotation = sa::look_at(cam.position, {0, 0, 5});
  const auto tp = sa::wall_frustum_homography(cam, wall);
  EXPECT_EQ(tp.target, "wall:w");
  const auto& h = tp.homography;
  EXPECT_LT(std::abs(h(2, 0)) / h.norm(), 1e-12);
  EXPECT_LT(std::abs(h(2, 1)) / h.norm(), 1e-12);
}

TEST(WallHomography, Rejections) {
  const auto wall = sa::WallRect::make("w", {Point3{-10, 0, 0}, {10, 0, 0}, {10, 0, 10}, {-10, 0, 10}});
  sa::CameraPose cam;
  cam.position = {0, 30, 5};  // behind the wall
  cam.rotation = sa::look_at(cam.position, {0, 0, 5});
  EXPECT_THROW(sa::wall_frustum_homography(cam, wall), sa::ProjectionError);
  cam.position = {0, 0, 5};  // on the plane
  cam.rotation = sa::look_at(cam.position, {0, -1, 5});
  EXPECT_THROW(sa::wall_frustum_homography(cam, wall), sa::ProjectionError);
  cam.position = {0, -30, 5};  // in front of the wall, looking away
  cam.rotation = sa::look_at(cam.position, {0, -60, 5});
  EXPECT_THROW(sa::wall_frustum_homography(cam, wall), sa::ProjectionError);
  EXPECT_THROW(sa::WallRect::make("bad", {Point3{0, 0, 0}, {1, 0, 0}, {1, 1, 1}, {0, 1, 0}}),
               sa::ProjectionError);
}

TEST(WallHomography, NearSingularCorrespondences) {
  const std::array<Eigen::Vector2d, 4> src{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
  const std::array<Eigen::Vector2d, 4> collapsed{{{5, 5}, {5, 5}, {5, 5}, {5, 5}}};
  EXPECT_THROW(sa::homography_from_correspondences(src, collapsed), sa::ProjectionError);
}

TEST(WallHomography, MatchesProjectionAndClosedForm) {
  testing_support::Rng rng(21);
  for (int i = 0; i < 1000; ++i) {
    const auto [cam, wall] = testing_support::random_camera_wall(rng);
    const auto tp = sa::wall_frustum_homography(cam, wall);
    constexpr std::array<std::array<double, 2>, 4> kLocal{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
    for (std::size_t k = 0; k < 4; ++k) {
      const auto expect = sa::project_point(cam, wall.corners[k]).pixel;
      EXPECT_LE(rel_err(sa::apply_homography(tp.homography, kLocal[k][0], kLocal[k][1]), expect), 1e-9);
    }
    const auto mid = sa::apply_homography(tp.homography, 0.5, 0.5);
    const auto mid3 = sa::project_point(cam, wall.at(0.5, 0.5)).pixel;
    EXPECT_NEAR(mid.x, mid3.x, 1e-6);
    EXPECT_NEAR(mid.y, mid3.y, 1e-6);
    // Interior points against the closed form.
    const Eigen::Matrix3d ref = analytic_homography(cam, wall);
    for (int k = 0; k < 5; ++k) {
      const double s = uniform(rng, 0, 1), t = uniform(rng, 0, 1);
      const auto a = sa::apply_homography(tp.homography, s, t);
      const auto b = sa::apply_homography(ref, s, t);
      EXPECT_NEAR(a.x, b.x, 1e-6);
      EXPECT_NEAR(a.y, b.y, 1e-6);
    }
  }
}

TEST(GroundGrid, CellCounts) {
  EXPECT_EQ(sa::grid_ground({0, 0}, {100, 100}, 25).size(), 16u);
  const auto cells = sa::grid_ground({0, 0}, {101, 100}, 25);
  EXPECT_EQ(cells.size(), 20u);
  EXPECT_EQ(cells[4].max.x, 101);
  EXPECT_EQ(cells[4].min.x, 100);
  EXPECT_EQ(sa::grid_ground({0, 0}, {10, 10}, 25).size(), 1u);
  EXPECT_EQ(sa::grid_ground(sa::Polygon2{{{0, 0}, {100, 0}, {50, 100}}}, 25).size(), 16u);
  EXPECT_THROW(sa::grid_ground({0, 0}, {10, 10}, 0), sa::ProjectionError);
}

TEST(PlaceOnGround, NadirAndBehind) {
  const auto cells = sa::grid_ground({-50, -50}, {50, 50}, 25);
  const auto cam = nadir({-12.5, -12.5, 40});
  const auto placed = sa::place_on_ground(cam, cells, "cam1", 3);
  ASSERT_FALSE(placed.empty());
  const auto it = std::find_if(placed.begin(), placed.end(), [](const auto& p) { return p.target == "cell:5"; });
  ASSERT_NE(it, placed.end());
  EXPECT_LT(std::abs(it->homography(2, 0)) / it->homography.norm(), 1e-12);
  EXPECT_LT(std::abs(it->homography(2, 1)) / it->homography.norm(), 1e-12);
  EXPECT_EQ(it->source_id, "cam1");
  EXPECT_EQ(it->timestamp, 3);
  for (std::size_t i = 1; i < placed.size(); ++i) {
    EXPECT_LT(std::stoi(placed[i - 1].target.substr(5)), std::stoi(placed[i].target.substr(5)));
  }

  // A cell behind a forward-looking camera is omitted.
  sa::CameraPose fwd;
  fwd.position = {0, 0, 10};
  fwd.rotation = sa::look_at(fwd.position, {0, 100, 0});
  const auto behind = sa::grid_ground({-10, -100}, {10, -80}, 25);
  EXPECT_TRUE(sa::place_on_ground(fwd, behind).empty());
}

// Raster oracle for cell inclusion: 100 x 100 samples per cell; a cell is in
// iff a sample lands in the image. Disagreements are allowed only where the
// projected cell overlaps the image by less than one square pixel.
TEST(PlaceOnGround, MatchesRasterOracle) {
  testing_support::Rng rng(33);
  int compared = 0;
  for (int pose = 0; pose < 60; ++pose) {
    const auto cells = sa::grid_ground({-100, -100}, {100, 100}, 25);
    sa::CameraPose cam;
    for (;;) {
      cam.position = {uniform(rng, -150, 150), uniform(rng, -150, 150), uniform(rng, 20, 120)};
      cam.rotation = sa::look_at(cam.position, {uniform(rng, -80, 80), uniform(rng, -80, 80), 0});
      cam.zoom = uniform(rng, 1, 3);
      bool all_front = true;
      for (const Point3 c : {Point3{-100, -100, 0}, {100, -100, 0}, {100, 100, 0}, {-100, 100, 0}}) {
        all_front = all_front && sa::project_point(cam, c).depth > 0;
      }
      if (all_front) break;
    }
    std::set<std::string> impl;
    for (const auto& p : sa::place_on_ground(cam, cells)) impl.insert(p.target);
    for (const auto& cell : cells) {
      bool any = false;
      for (int i = 0; i < 100 && !any; ++i) {
        for (int j = 0; j < 100 && !any; ++j) {
          const double x = cell.min.x + (cell.max.x - cell.min.x) * i / 99.0;
          const double y = cell.min.y + (cell.max.y - cell.min.y) * j / 99.0;
          const auto p = sa::project_point(cam, {x, y, 0});
          any = p.in_front && p.pixel.x >= 0 && p.pixel.x <= 640 && p.pixel.y >= 0 && p.pixel.y <= 480;
        }
      }
      const bool in = impl.contains(cell.rect().id);
      if (in != any) {
        std::vector<oracle::P2> quad;
        for (const auto& c : cell.rect().corners) {
          const auto p = sa::project_point(cam, c).pixel;
          quad.push_back({p.x, p.y});
        }
        EXPECT_LT(oracle::clipped_area(quad, 640, 480), 1.0) << "pose " << pose << " " << cell.rect().id;
      }
      ++compared;
    }
  }
  EXPECT_EQ(compared, 60 * 64);
}

TEST(ImagePlaneQuad, LiesAtRange) {
  testing_support::Rng rng(2);
  const auto [cam, wall] = testing_support::random_camera_wall(rng);
  const auto q = sa::image_plane_quad(cam, 10);
  const auto p0 = sa::project_point(cam, q[0]);
  const auto p2 = sa::project_point(cam, q[2]);
  EXPECT_NEAR(p0.depth, 10, 1e-9);
  EXPECT_NEAR(p0.pixel.x, 0, 1e-6);
  EXPECT_NEAR(p2.pixel.x, 640, 1e-6);
  EXPECT_NEAR(p2.pixel.y, 480, 1e-6);
}

TEST(TexturePlacement, JsonShape) {
  const auto wall = sa::WallRect::make("w", {Point3{-10, 0, 0}, {10, 0, 0}, {10, 0, 10}, {-10, 0, 10}});
  sa::CameraPose cam;
  cam.position = {0, -30, 5};
  cam.rotation = sa::look_at(cam.position, {0, 0, 5});
  const auto j = sa::to_json(sa::wall_frustum_homography(cam, wall, "", "cam", 1.5));
  EXPECT_EQ(j.at("homography").size(), 9u);
  EXPECT_EQ(j.at("quad").size(), 4u);
  EXPECT_EQ(j.at("source"), "cam");
}

}  // namespace
