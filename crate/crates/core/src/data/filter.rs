use std::collections::HashMap;

use super::{InteractionDataset, UserHistory};

const CORE: usize = 5;

/// Removes users and items with fewer than five interactions, repeating until nothing
/// changes. The result is the unique maximal 5-core, so removal order does not matter.
pub fn apply_five_core(ds: &InteractionDataset) -> InteractionDataset {
    let mut users: Vec<UserHistory> = ds.users.clone();
    loop {
        let mut item_counts: HashMap<&str, usize> = HashMap::new();
        for u in &users {
            for item in &u.items {
                *item_counts.entry(item.as_str()).or_default() += 1;
            }
        }
        let weak_items: std::collections::HashSet<String> = item_counts
            .iter()
            .filter(|(_, &c)| c < CORE)
            .map(|(i, _)| (*i).to_owned())
            .collect();
        let before = users.len();
        let mut changed = !weak_items.is_empty();
        users = users
            .into_iter()
            .filter_map(|mut u| {
                if !weak_items.is_empty() {
                    u.items.retain(|i| !weak_items.contains(i));
                }
                (u.items.len() >= CORE).then_some(u)
            })
            .collect();
        changed |= users.len() != before;
        if !changed {
            break;
        }
    }
    InteractionDataset::from_users(users)
}
