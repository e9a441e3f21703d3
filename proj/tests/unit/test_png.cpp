#include <doctest.h>

#include <cmath>
#include <fstream>

#include "boostdream/errors.hpp"
#include "boostdream/png_io.hpp"
#include "support.hpp"

using namespace boostdream;
using testsupport::TempDir;

TEST_CASE("sRGB transfer matches the piecewise definition") {
    for (double x = 0.0; x <= 1.0; x += 0.001) {
        const double e = x <= 0.0031308 ? 12.92 * x : 1.055 * std::pow(x, 1.0 / 2.4) - 0.055;
        CHECK(png::linear_to_srgb(x) == doctest::Approx(e).epsilon(1e-13));
        CHECK(png::srgb_to_linear(png::linear_to_srgb(x)) == doctest::Approx(x).epsilon(1e-11).scale(1.0));
    }
    CHECK(png::encode_channel(0.0) == 0);
    CHECK(png::encode_channel(1.0) == 255);
    CHECK(png::encode_channel(-0.3) == 0);
    CHECK(png::encode_channel(7.0) == 255);
    CHECK(png::encode_channel(0.5) == 188);  // round(255 * 0.735357)
    for (int c = 0; c < 256; ++c) CHECK(png::encode_channel(png::decode_channel(static_cast<std::uint8_t>(c))) == c);
}

TEST_CASE("PNG round trip equals quantize") {
    TempDir dir("png");
    Rng rng(1);
    const Image img = testsupport::random_image(7, 5, 3, rng, 0.0, 1.0);
    png::write(dir / "a.png", img);
    const Image back = png::read(dir / "a.png");
    REQUIRE(back.same_shape(img));
    CHECK(back == png::quantize(img));
    CHECK(testsupport::max_abs_diff(back.data, img.data) < 0.01);
}

TEST_CASE("gray PNGs read back as three equal channels") {
    TempDir dir("png_gray");
    Image g(3, 4, 1, 0.25);
    g.at(1, 2) = 1.0;
    png::write(dir / "g.png", g);
    const Image back = png::read(dir / "g.png");
    CHECK(back.channels == 3);
    CHECK(back.at(1, 2, 1) == 1.0);
    CHECK(back.at(0, 0, 0) == back.at(0, 0, 2));
    CHECK(back.at(0, 0, 0) == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("PNG errors") {
    TempDir dir("png_bad");
    {
        std::ofstream out(dir / "x.png");
        out << "not a png";
    }
    CHECK_THROWS_AS(png::read(dir / "x.png"), FormatError);
    CHECK_THROWS_AS(png::read(dir / "missing.png"), FormatError);
    CHECK_THROWS(png::write(dir / "two.png", Image(2, 2, 2)));
    CHECK_THROWS(png::write(dir / "no_such_dir" / "a.png", Image(2, 2, 3)));
}
