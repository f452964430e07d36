//! Fungible-token accounting.
//!
//! A [`Ledger`] tracks every token in one simulated world. Failed operations
//! return an error and leave the ledger untouched.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fixed::{Amount, ArithmeticError};

/// One of the two yield venues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VenueId {
    X,
    Y,
}

impl VenueId {
    pub const ALL: [VenueId; 2] = [VenueId::X, VenueId::Y];

    /// Share token issued by this venue.
    pub fn share_token(self) -> TokenId {
        match self {
            VenueId::X => TokenId::Cx,
            VenueId::Y => TokenId::Cy,
        }
    }
}

impl fmt::Display for VenueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VenueId::X => "x",
            VenueId::Y => "y",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum TokenId {
    /// The common underlying.
    C,
    /// Shares of venue x.
    Cx,
    /// Shares of venue y.
    Cy,
    /// Senior tranche.
    A,
    /// Junior tranche.
    B,
    /// Liquidity shares of the named pool.
    Lp(String),
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenId::C => f.write_str("C"),
            TokenId::Cx => f.write_str("Cx"),
            TokenId::Cy => f.write_str("Cy"),
            TokenId::A => f.write_str("A"),
            TokenId::B => f.write_str("B"),
            TokenId::Lp(pool) => write!(f, "LP:{pool}"),
        }
    }
}

impl From<TokenId> for String {
    fn from(t: TokenId) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for TokenId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl std::str::FromStr for TokenId {
    type Err = String;

    /// Accepts the [`fmt::Display`] form, e.g. `Cx` or `LP:a_c`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "C" => Ok(TokenId::C),
            "Cx" => Ok(TokenId::Cx),
            "Cy" => Ok(TokenId::Cy),
            "A" => Ok(TokenId::A),
            "B" => Ok(TokenId::B),
            _ => match s.strip_prefix("LP:") {
                Some(pool) if !pool.is_empty() => Ok(TokenId::Lp(pool.to_string())),
                _ => Err(format!("unknown token `{s}`")),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AccountId {
    /// Issuer of the underlying; also mints venue yield and flash loans.
    Genesis,
    /// The insurance contract.
    Insurance,
    Venue(VenueId),
    Pool(String),
    Agent(String),
}

impl AccountId {
    pub fn agent(name: impl Into<String>) -> Self {
        AccountId::Agent(name.into())
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccountId::Genesis => f.write_str("genesis"),
            AccountId::Insurance => f.write_str("insurance"),
            AccountId::Venue(v) => write!(f, "venue:{v}"),
            AccountId::Pool(p) => write!(f, "pool:{p}"),
            AccountId::Agent(a) => write!(f, "agent:{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("token {0} is already registered")]
    DuplicateToken(TokenId),
    #[error("token {0} is not registered")]
    UnknownToken(TokenId),
    #[error("{caller} is not the mint authority of {token}")]
    Unauthorized { token: TokenId, caller: AccountId },
    #[error("{account} holds {available} {token}, needs {required}")]
    InsufficientBalance {
        token: TokenId,
        account: AccountId,
        available: Amount,
        required: Amount,
    },
    #[error(transparent)]
    Arithmetic(#[from] ArithmeticError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
struct TokenInfo {
    authority: AccountId,
    supply: Amount,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ledger {
    tokens: BTreeMap<TokenId, TokenInfo>,
    balances: BTreeMap<(TokenId, AccountId), Amount>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_token(&mut self, id: TokenId, authority: AccountId) -> Result<(), LedgerError> {
        if self.tokens.contains_key(&id) {
            return Err(LedgerError::DuplicateToken(id));
        }
        self.tokens.insert(id, TokenInfo { authority, supply: Amount::ZERO });
        Ok(())
    }

    pub fn is_registered(&self, id: &TokenId) -> bool {
        self.tokens.contains_key(id)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &TokenId> {
        self.tokens.keys()
    }

    pub fn mint_authority(&self, id: &TokenId) -> Result<&AccountId, LedgerError> {
        Ok(&self.info(id)?.authority)
    }

    pub fn mint(&mut self, id: &TokenId, to: &AccountId, amt: Amount, caller: &AccountId) -> Result<(), LedgerError> {
        let info = self.authorized(id, caller)?;
        let supply = info.supply.checked_add(amt)?;
        let balance = self.balance_of(id, to)?.checked_add(amt)?;
        if amt.is_zero() {
            return Ok(());
        }
        self.tokens.get_mut(id).expect("checked").supply = supply;
        self.balances.insert((id.clone(), to.clone()), balance);
        Ok(())
    }

    pub fn burn(&mut self, id: &TokenId, from: &AccountId, amt: Amount, caller: &AccountId) -> Result<(), LedgerError> {
        let info = self.authorized(id, caller)?;
        let supply = info.supply;
        let balance = self.debit(id, from, amt)?;
        if amt.is_zero() {
            return Ok(());
        }
        self.tokens.get_mut(id).expect("checked").supply = supply.checked_sub(amt)?;
        self.set_balance(id, from, balance);
        Ok(())
    }

    pub fn transfer(&mut self, id: &TokenId, from: &AccountId, to: &AccountId, amt: Amount) -> Result<(), LedgerError> {
        let from_after = self.debit(id, from, amt)?;
        if from == to || amt.is_zero() {
            return Ok(());
        }
        let to_after = self.balance_of(id, to)?.checked_add(amt)?;
        self.set_balance(id, from, from_after);
        self.set_balance(id, to, to_after);
        Ok(())
    }

    pub fn balance_of(&self, id: &TokenId, acct: &AccountId) -> Result<Amount, LedgerError> {
        self.info(id)?;
        Ok(self.balances.get(&(id.clone(), acct.clone())).copied().unwrap_or_default())
    }

    pub fn total_supply_of(&self, id: &TokenId) -> Result<Amount, LedgerError> {
        Ok(self.info(id)?.supply)
    }

    /// Non-zero balances of one token, in account order.
    pub fn holders<'a>(&'a self, id: &'a TokenId) -> impl Iterator<Item = (&'a AccountId, Amount)> + 'a {
        self.balances
            .range((id.clone(), AccountId::Genesis)..)
            .take_while(move |((t, _), _)| t == id)
            .map(|((_, a), v)| (a, *v))
    }

    /// Checks that every token's balances add up to its supply.
    pub fn check_conservation(&self) -> Result<(), TokenId> {
        for (id, info) in &self.tokens {
            let sum = self
                .holders(id)
                .try_fold(Amount::ZERO, |acc, (_, v)| acc.checked_add(v))
                .map_err(|_| id.clone())?;
            if sum != info.supply {
                return Err(id.clone());
            }
        }
        Ok(())
    }

    fn info(&self, id: &TokenId) -> Result<&TokenInfo, LedgerError> {
        self.tokens.get(id).ok_or_else(|| LedgerError::UnknownToken(id.clone()))
    }

    fn authorized(&self, id: &TokenId, caller: &AccountId) -> Result<&TokenInfo, LedgerError> {
        let info = self.info(id)?;
        if &info.authority != caller {
            return Err(LedgerError::Unauthorized { token: id.clone(), caller: caller.clone() });
        }
        Ok(info)
    }

    /// Balance of `acct` after removing `amt`, without writing it.
    fn debit(&self, id: &TokenId, acct: &AccountId, amt: Amount) -> Result<Amount, LedgerError> {
        let available = self.balance_of(id, acct)?;
        available.checked_sub(amt).map_err(|_| LedgerError::InsufficientBalance {
            token: id.clone(),
            account: acct.clone(),
            available,
            required: amt,
        })
    }

    fn set_balance(&mut self, id: &TokenId, acct: &AccountId, v: Amount) {
        let key = (id.clone(), acct.clone());
        if v.is_zero() {
            self.balances.remove(&key);
        } else {
            self.balances.insert(key, v);
        }
    }
}
