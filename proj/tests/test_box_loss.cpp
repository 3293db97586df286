#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "ltv/box.hpp"
#include "ltv/rng.hpp"

using namespace ltv;

TEST_CASE("iou hand values") {
  BBox a{0, 0, 2, 2};
  REQUIRE(iou(a, a) == 1.0);
  REQUIRE(iou(a, BBox{5, 5, 7, 7}) == 0.0);
  REQUIRE_THAT(iou(a, BBox{1, 1, 3, 3}), Catch::Matchers::WithinAbs(1.0 / 7.0, 1e-9));
  // Touching edges share zero area.
  REQUIRE(iou(a, BBox{2, 0, 4, 2}) == 0.0);
}

TEST_CASE("iou rejects inverted boxes") {
  REQUIRE_THROWS_AS(iou(BBox{2, 0, 1, 2}, BBox{0, 0, 1, 1}), ValidationError);
  REQUIRE_THROWS_AS(iou(BBox{0, 2, 1, 1}, BBox{0, 0, 1, 1}), ValidationError);
}

TEST_CASE("iou degenerate union is zero") {
  BBox point{1, 1, 1, 1};
  REQUIRE(iou(point, point) == 0.0);
}

TEST_CASE("ciou hand values") {
  REQUIRE_THAT(ciou_loss(BBox{0, 0, 4, 2}, BBox{0, 0, 4, 2}),
               Catch::Matchers::WithinAbs(0.0, 1e-9));
  // Pred half the linear size of gt, concentric, same aspect: v = 0 and the
  // center term vanishes, leaving 1 - IoU = 1 - 1/4.
  BBox gt = BBox::from_center(10, 10, 8, 4);
  BBox pred = BBox::from_center(10, 10, 4, 2);
  REQUIRE_THAT(ciou_loss(pred, gt), Catch::Matchers::WithinAbs(0.75, 1e-9));
}

TEST_CASE("ciou rejects non-positive sizes") {
  REQUIRE_THROWS_AS(ciou_loss(BBox{0, 0, 0, 2}, BBox{0, 0, 1, 1}), ValidationError);
  REQUIRE_THROWS_AS(ciou_loss(BBox{0, 0, 2, 2}, BBox{3, 3, 3, 4}), ValidationError);
}

TEST_CASE("ciou lower-bounded by 1 - iou") {
  Rng rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    const double acx = rng.uniform(-5, 5), acy = rng.uniform(-5, 5);
    const double aw = rng.uniform(0.1, 6), ah = rng.uniform(0.1, 6);
    const double bcx = rng.uniform(-5, 5), bcy = rng.uniform(-5, 5);
    const double bw = rng.uniform(0.1, 6), bh = rng.uniform(0.1, 6);
    BBox a = BBox::from_center(acx, acy, aw, ah);
    BBox b = BBox::from_center(bcx, bcy, bw, bh);
    const double loss = ciou_loss(a, b);
    REQUIRE(loss >= 1.0 - iou(a, b) - 1e-12);
    REQUIRE(loss >= 0.0);
  }
}

TEST_CASE("ciou zero iff identical") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    BBox a = BBox::from_center(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0.2, 4),
                               rng.uniform(0.2, 4));
    REQUIRE_THAT(ciou_loss(a, a), Catch::Matchers::WithinAbs(0.0, 1e-12));
    BBox b = a;
    b.x1 += 0.05;
    b.x2 += 0.05;
    REQUIRE(ciou_loss(b, a) > 0.0);
  }
}

TEST_CASE("center offset costs more than concentric shrink at equal iou") {
  // Equal-size squares offset by d have IoU (s-d)/(s+d); a concentric pair
  // with the same IoU has zero distance penalty, so its loss must be lower.
  const double s = 4.0;
  for (int step = 1; step <= 19; ++step) {
    const double d = s * step / 20.0;
    BBox off_a = BBox::from_center(0, 0, s, s);
    BBox off_b = BBox::from_center(d, 0, s, s);
    const double q = iou(off_a, off_b);
    const double inner = s * std::sqrt(q);
    BBox con_a = BBox::from_center(0, 0, inner, inner);
    BBox con_b = BBox::from_center(0, 0, s, s);
    REQUIRE_THAT(iou(con_a, con_b), Catch::Matchers::WithinAbs(q, 1e-12));
    REQUIRE(ciou_loss(off_a, off_b) > ciou_loss(con_a, con_b));
  }
}

TEST_CASE("bbox helpers") {
  BBox b = BBox::from_center(3, 4, 2, 6);
  REQUIRE(b.x1 == 2.0);
  REQUIRE(b.y1 == 1.0);
  REQUIRE(b.x2 == 4.0);
  REQUIRE(b.y2 == 7.0);
  REQUIRE(b.width() == 2.0);
  REQUIRE(b.height() == 6.0);
  REQUIRE(b.area() == 12.0);
  REQUIRE(b.cx() == 3.0);
  REQUIRE(b.cy() == 4.0);
}
