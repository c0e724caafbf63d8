#pragma once

#include "voxmol/chem_io.hpp"
#include "voxmol/elements.hpp"
#include "voxmol/error.hpp"
#include "voxmol/example.hpp"
#include "voxmol/geom.hpp"
#include "voxmol/grid.hpp"
#include "voxmol/log.hpp"
#include "voxmol/molcache.hpp"
#include "voxmol/npy.hpp"
#include "voxmol/parallel.hpp"
#include "voxmol/sampling.hpp"
#include "voxmol/typing.hpp"
#include "voxmol/vec3.hpp"
#include "voxmol/voxelizer.hpp"
