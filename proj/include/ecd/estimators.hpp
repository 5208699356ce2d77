#pragma once

#include "ecd/fp.hpp"
#include "ecd/idg.hpp"
#include "ecd/isg.hpp"
#include "ecd/mm.hpp"
#include "ecd/trace.hpp"
