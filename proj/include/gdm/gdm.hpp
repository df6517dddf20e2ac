#pragma once

#include "gdm/dimension.hpp"
#include "gdm/embedding.hpp"
#include "gdm/error.hpp"
#include "gdm/evalkit.hpp"
#include "gdm/io.hpp"
#include "gdm/objective.hpp"
#include "gdm/optimizer.hpp"
#include "gdm/partition.hpp"
#include "gdm/robust.hpp"
