#![allow(dead_code)]

use std::sync::Arc;

use skycat::htm::{ConvexRegion, UnitVector};
use skycat::loader::{generate, GeneratedCatalog, GeneratorSpec, Loader};
use skycat::store::{Catalog, CatalogState, TableName};

pub fn generated(n: usize, seed: u64, region: Option<ConvexRegion>, neighbors: bool) -> (GeneratedCatalog, Arc<CatalogState>) {
    let spec = GeneratorSpec {
        n_objects: n,
        n_plates: (n / 5000).max(1),
        seed,
        sky_region: region,
        neighbors,
        ..Default::default()
    };
    let g = generate(&spec).expect("generate");
    let loader = Loader::in_memory(Arc::new(Catalog::new()));
    g.load_into(&loader).expect("load");
    let state = loader.catalog().snapshot();
    (g, state)
}

pub fn state(n: usize, seed: u64, region: Option<ConvexRegion>) -> Arc<CatalogState> {
    generated(n, seed, region, false).1
}

pub fn points(state: &CatalogState) -> Vec<UnitVector> {
    let t = state.table(TableName::PhotoObj);
    let (x, y, z) = (t.floats("cx"), t.floats("cy"), t.floats("cz"));
    (0..t.len()).map(|r| UnitVector::new_unchecked(x[r], y[r], z[r])).collect()
}
