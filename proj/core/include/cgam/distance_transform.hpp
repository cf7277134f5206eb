#pragma once

#include <vector>

#include "cgam/image.hpp"

namespace cgam {

// Exact Euclidean distance from every mask pixel to the nearest pixel outside
// the mask; pixels outside the mask get 0. The image is treated as surrounded
// by a one-pixel ring of outside pixels, so a full mask still has finite
// distances (a corner pixel measures 1).
//
// Column pass: linear two-sided scan. Row pass: lower envelope of parabolas.
std::vector<double> distance_transform(const Mask& mask);

// Squared distances as exact integers, same convention.
std::vector<long> squared_distance_transform(const Mask& mask);

}  // namespace cgam
