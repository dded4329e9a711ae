#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "rex/program.hpp"
#include "rex/scene.hpp"

namespace rex::testing {

// Small vocabularies shared by the random generators.
inline const std::vector<std::string> kNames = {"dog", "cat", "table", "plate", "apple", "chair"};
inline const std::vector<std::string> kColors = {"red", "green", "white", "silver"};
inline const std::vector<std::string> kMaterials = {"wooden", "metal"};
inline const std::vector<std::string> kSizes = {"small", "medium", "large"};
inline const std::vector<std::string> kPredicates = {"on", "next to", "under"};

std::size_t pick(std::mt19937_64& rng, std::size_t n);
double uniform(std::mt19937_64& rng, double lo, double hi);

BBox random_box(std::mt19937_64& rng, double width, double height);

// Up to `max_objects` objects with random color/material/size/cleanliness and
// relations. "next to" is always stored in both directions.
SceneGraph random_scene(std::mt19937_64& rng, std::size_t max_objects = 8,
                        std::string image_id = "img");

// Regions near each object's box plus a few distractors, shuffled.
RegionSet random_regions(std::mt19937_64& rng, const SceneGraph& g);

// Well-typed random program with at most `max_nodes` nodes. Node ids are
// random so that topological order differs from creation order.
ReasoningProgram random_program(std::mt19937_64& rng, std::size_t max_nodes = 6,
                                std::string question_id = "q", std::string image_id = "img");

// Writes scenes/, regions/ and programs.jsonl under `dir`.
struct Corpus {
  std::filesystem::path dir;
  std::filesystem::path scenes;
  std::filesystem::path regions;
  std::filesystem::path programs;
};

Corpus write_corpus(const std::filesystem::path& dir, std::size_t questions,
                    std::size_t images, std::uint64_t seed);

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& tag);

std::string slurp(const std::filesystem::path& path);
void spit(const std::filesystem::path& path, const std::string& text);

}  // namespace rex::testing
