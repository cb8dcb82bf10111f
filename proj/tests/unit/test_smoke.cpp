#include <pmiris/pmiris.hpp>

#include <catch2/catch_amalgamated.hpp>

TEST_CASE("umbrella header pulls in the whole library", "[grid]") {
    pmiris::GrayImage img(4, 3);
    REQUIRE(img.size() == 12);
    REQUIRE(pmiris::version_string == std::string("0.1.0"));
}
