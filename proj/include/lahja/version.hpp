#pragma once

#define LAHJA_VERSION_MAJOR 0
#define LAHJA_VERSION_MINOR 1
#define LAHJA_VERSION_PATCH 0
#define LAHJA_VERSION "0.1.0"
