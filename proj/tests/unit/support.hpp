#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "funcarea/imaging.hpp"
#include "funcarea/random.hpp"

namespace testing {

inline std::filesystem::path temp_dir(const std::string& name) {
    const char* root = std::getenv("FUNCAREA_TMP");
    std::filesystem::path dir = root != nullptr ? std::filesystem::path(root) : std::filesystem::temp_directory_path() / "funcarea_tests";
    dir /= name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline funcarea::Image random_image(int w, int h, int channels, std::uint64_t seed) {
    funcarea::Image img(w, h, channels);
    funcarea::Rng rng(seed);
    for (float& v : img.data()) v = static_cast<float>(rng.uniform());
    return img;
}

/// Random image built from a few flat rectangles, so segmentations are
/// non-trivial but not pixel-level noise.
inline funcarea::Image blocky_image(int w, int h, std::uint64_t seed) {
    funcarea::Rng rng(seed);
    funcarea::Image img(w, h, 3);
    for (int pass = 0; pass < 8; ++pass) {
        const int x0 = static_cast<int>(rng.uniform_int(0, w - 1));
        const int y0 = static_cast<int>(rng.uniform_int(0, h - 1));
        const int x1 = static_cast<int>(rng.uniform_int(x0 + 1, w));
        const int y1 = static_cast<int>(rng.uniform_int(y0 + 1, h));
        const float c[3] = {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()),
                            static_cast<float>(rng.uniform())};
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x)
                for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = c[ch];
    }
    for (float& v : img.data()) v = std::clamp(v + static_cast<float>(0.02 * (rng.uniform() - 0.5)), 0.0F, 1.0F);
    return img;
}

}  // namespace testing
