#pragma once

#include "beaconopt/beacon_layer.hpp"
#include "beaconopt/config.hpp"
#include "beaconopt/environment.hpp"
#include "beaconopt/evaluation.hpp"
#include "beaconopt/geometry.hpp"
#include "beaconopt/net.hpp"
#include "beaconopt/placement.hpp"
#include "beaconopt/rng.hpp"
#include "beaconopt/serialize.hpp"
#include "beaconopt/training.hpp"
