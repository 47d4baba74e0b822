use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Number of users in a strict leave-one-user-out setup.
pub const LOUO_USERS: usize = 8;

/// One leave-one-user-out split, as indices into the trial list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub test_user: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Builds one fold per user. `trial_users[i]` is the user of trial `i`.
///
/// With a `roster`, every listed user must own at least one trial and no
/// trial may belong to an unlisted user. `strict` requires exactly eight
/// users.
pub fn louo_folds<S: AsRef<str>>(trial_users: &[S], roster: Option<&[String]>, strict: bool) -> Result<Vec<Fold>> {
    let present: BTreeSet<&str> = trial_users.iter().map(AsRef::as_ref).collect();
    let users: Vec<String> = match roster {
        Some(r) => {
            for u in r {
                if !present.contains(u.as_str()) {
                    return Err(Error::Validation(format!("user {u} has no trials")));
                }
            }
            if let Some(extra) = present.iter().find(|u| !r.iter().any(|x| x == *u)) {
                return Err(Error::Validation(format!("trial user {extra} is not in the roster")));
            }
            r.to_vec()
        }
        None => present.iter().map(|s| s.to_string()).collect(),
    };
    if strict && users.len() != LOUO_USERS {
        return Err(Error::Validation(format!(
            "leave-one-user-out needs {LOUO_USERS} users, found {}",
            users.len()
        )));
    }
    if users.is_empty() {
        return Err(Error::Validation("no trials".into()));
    }
    Ok(users
        .into_iter()
        .map(|u| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..trial_users.len()).partition(|&i| trial_users[i].as_ref() == u);
            Fold {
                test_user: u,
                train,
                test,
            }
        })
        .collect())
}
